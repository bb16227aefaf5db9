#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cqedmap/io.hpp"

namespace py = pybind11;
using namespace cqedmap;

namespace {

py::dict record_to_dict(const EvolutionRecord& r) {
  py::dict out;
  out["tau"] = py::array_t<double>(static_cast<py::ssize_t>(r.times.size()), r.times.data());
  for (std::size_t c = 0; c < r.names.size(); ++c) {
    out[py::str(r.names[c])] = py::array_t<double>(static_cast<py::ssize_t>(r.values[c].size()), r.values[c].data());
  }
  for (std::size_t c = 0; c < r.std_errors.size(); ++c) {
    out[py::str("se_" + r.names[c])] =
        py::array_t<double>(static_cast<py::ssize_t>(r.std_errors[c].size()), r.std_errors[c].data());
  }
  out["warnings"] = r.warnings;
  out["jumps"] = r.diagnostics.jumps;
  return out;
}

// Numeric columns become arrays, text columns lists of str.
py::dict table_to_dict(const Table& t) {
  py::dict out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    bool numeric = true;
    for (const auto& row : t.rows) numeric = numeric && std::holds_alternative<double>(row[c]);
    if (numeric) {
      std::vector<double> v;
      for (const auto& row : t.rows) v.push_back(std::get<double>(row[c]));
      out[py::str(t.columns[c])] = py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
    } else {
      py::list v;
      for (const auto& row : t.rows) {
        if (const auto* s = std::get_if<std::string>(&row[c])) {
          v.append(*s);
        } else {
          v.append(std::get<double>(row[c]));
        }
      }
      out[py::str(t.columns[c])] = v;
    }
  }
  return out;
}

py::list cross_checks(const SweepResult& s) {
  py::list out;
  for (const auto& x : s.cross_checks) {
    py::dict d;
    d["rate"] = x.rate;
    d["quantity"] = x.quantity;
    d["tau"] = x.tau;
    d["master"] = x.reference;
    d["mcwf"] = x.mcwf;
    d["mcwf_se"] = x.std_error;
    d["z"] = x.z();
    out.append(d);
  }
  return out;
}

py::dict sweep_to_dict(const SweepResult& s) {
  py::dict out;
  out["table"] = table_to_dict(s.table);
  out["fits"] = table_to_dict(s.fits);
  out["cross_checks"] = cross_checks(s);
  out["warnings"] = s.warnings;
  return out;
}

Matrix as_rho8(const Matrix& rho) {
  if (rho.rows() != 8 || rho.cols() != 8) throw std::invalid_argument("expected an 8x8 density matrix");
  return rho;
}

Cut parse_cut(const std::string& s) {
  if (s == "A|BC") return Cut::A_BC;
  if (s == "B|AC") return Cut::B_AC;
  if (s == "C|AB") return Cut::C_AB;
  throw std::invalid_argument("cut must be one of A|BC, B|AC, C|AB");
}

ParsedConfig make_config(const std::string& text, const py::dict& overrides) {
  ParsedConfig p = parse_config(text, "<python>");
  for (const auto& [k, v] : overrides) {
    apply_setting(p, py::str(k).cast<std::string>(), py::str(v).cast<std::string>(), "<python>");
  }
  finalize_config(p, "<python>");
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fiber-coupled cavity QED state mapping";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<ParsedConfig>(m, "Config")
      .def(py::init(&make_config), py::arg("text") = "", py::arg("overrides") = py::dict(),
           "Flat `key = value` text plus keyword overrides.")
      .def(
          "set",
          [](ParsedConfig& p, const std::string& key, const py::object& value) {
            apply_setting(p, key, py::str(value).cast<std::string>(), "<python>");
            finalize_config(p, "<python>");
          },
          py::arg("key"), py::arg("value"))
      .def("echo",
           [](const ParsedConfig& p) {
             py::dict d;
             for (const auto& [k, v] : config_echo(p.config)) d[py::str(k)] = v;
             return d;
           })
      .def_property_readonly("given", [](const ParsedConfig& p) { return p.given; });

  m.def("config_keys", &config_keys);

  m.def(
      "run_fig1",
      [](const ParsedConfig& c) {
        Fig1Result r;
        {
          py::gil_scoped_release release;
          r = run_fig1(c.config);
        }
        py::dict out;
        out["series"] = record_to_dict(r.series);
        out["peaks"] = table_to_dict(r.peaks);
        out["tau_off"] = r.tau_off;
        return out;
      },
      py::arg("config"));

  m.def(
      "run_werner_plane",
      [](const ParsedConfig& c, const std::vector<double>& p_grid, const std::vector<double>& section_ps) {
        WernerResult r;
        {
          py::gil_scoped_release release;
          r = run_werner_plane(c.config, p_grid, section_ps);
        }
        py::dict out;
        out["map"] = table_to_dict(r.map);
        out["sections"] = table_to_dict(r.sections);
        out["events"] = table_to_dict(r.events);
        out["declined"] = r.declined;
        out["warnings"] = r.warnings;
        return out;
      },
      py::arg("config"), py::arg("p_grid"), py::arg("section_ps"));

  m.def(
      "sweep_cavity_decay",
      [](const ParsedConfig& c, const std::vector<double>& kappas, const std::vector<double>& anchors) {
        SweepResult r;
        {
          py::gil_scoped_release release;
          r = sweep_cavity_decay(c.config, kappas, anchors);
        }
        return sweep_to_dict(r);
      },
      py::arg("config"), py::arg("kappa_list"), py::arg("anchors") = std::vector<double>{});

  m.def(
      "sweep_fiber_decay",
      [](const ParsedConfig& c, const std::vector<double>& kappas, const std::vector<double>& anchors) {
        SweepResult r;
        {
          py::gil_scoped_release release;
          r = sweep_fiber_decay(c.config, kappas, anchors);
        }
        return sweep_to_dict(r);
      },
      py::arg("config"), py::arg("kappa_f_list"), py::arg("anchors") = std::vector<double>{});

  m.def(
      "run_multimode",
      [](const ParsedConfig& c, const std::vector<double>& nus, const std::string& policy) {
        const auto pol = parse_switch_off_policy(policy);
        if (!pol || *pol == SwitchOffPolicy::FixedTime) {
          throw std::invalid_argument("policy must be one of max_pe, min_nf, max_nc");
        }
        MultimodeResult r;
        {
          py::gil_scoped_release release;
          r = run_multimode(c.config, nus, *pol);
        }
        py::dict out;
        out["table"] = table_to_dict(r.table);
        out["traces"] = table_to_dict(r.traces);
        out["warnings"] = r.warnings;
        return out;
      },
      py::arg("config"), py::arg("nu_list"), py::arg("policy") = "max_nc");

  m.def(
      "robustness_tau_off",
      [](const ParsedConfig& c, const std::vector<double>& deltas) {
        RobustnessResult r;
        {
          py::gil_scoped_release release;
          r = robustness_tau_off(c.config, deltas);
        }
        return table_to_dict(r.table);
      },
      py::arg("config"), py::arg("delta_list"));

  m.def(
      "evolve",
      [](const ParsedConfig& c, double t_end) {
        ScenarioConfig cfg = c.config;
        const ModelParams& p = cfg.base;
        EvolutionOptions o = cfg.evolution;
        o.reference = cfg.initial.reference();
        EvolutionRecord r;
        {
          py::gil_scoped_release release;
          const InitialState init = initial_state(cfg.initial, build_space(p));
          r = evolve(p, init, TimeGrid{0.0, t_end, cfg.dt, cfg.sample_every}, o);
        }
        return record_to_dict(r);
      },
      py::arg("config"), py::arg("t_end"), "Single run with the config's method, rates and initial state.");

  m.def(
      "classify",
      [](const Matrix& rho) {
        const Classification c = classify(as_rho8(rho));
        py::dict out;
        out["label"] = c.label ? py::object(py::str(std::string(to_string(*c.label)))) : py::object(py::none());
        out["diagnostic"] = c.diagnostic;
        out["negativity"] = c.negativity;
        out["w_ghz"] = c.witness.w_ghz;
        out["w_bisep"] = c.witness.w_bisep;
        return out;
      },
      py::arg("rho"));
  m.def(
      "tripartite_negativity", [](const Matrix& rho) { return tripartite_negativity(as_rho8(rho)); }, py::arg("rho"));
  m.def(
      "bipartite_negativity",
      [](const Matrix& rho, const std::string& cut) { return bipartite_negativity(as_rho8(rho), parse_cut(cut)); },
      py::arg("rho"), py::arg("cut"));
}
