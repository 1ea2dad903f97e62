#pragma once

// JSON documents: model specification, training configuration, fitted model,
// training report, cut points and evaluation results.

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamm/error.hpp"
#include "pamm/metrics.hpp"
#include "pamm/model.hpp"
#include "pamm/ped.hpp"
#include "pamm/spline.hpp"
#include "pamm/trainer.hpp"

namespace pamm {

using json = nlohmann::ordered_json;

namespace detail {

template <class F>
auto guard(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": " + e.what());
  }
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw InputError(where + ": unknown key '" + it.key() + "'");
}

// Row-major nested arrays.
inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw InputError("matrix has wrong shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw InputError("matrix has wrong shape");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) throw InputError("vector has wrong length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cut points

inline json to_json(const CutStrategy& s) {
  if (s.kind == CutStrategy::Kind::event_times) return json{{"strategy", "event_times"}};
  return json{{"strategy", "quantiles"}, {"n_intervals", s.n_intervals}};
}

inline CutStrategy cut_strategy_from_json(const json& j) {
  return detail::guard("cuts", [&] {
    detail::check_keys(j, {"strategy", "n_intervals"}, "cuts");
    const std::string s = j.value("strategy", "quantiles");
    if (s == "event_times") return CutStrategy::event_times();
    if (s == "quantiles") {
      const long n = j.value("n_intervals", 20L);
      if (n < 1) throw InputError("cuts: n_intervals must be >= 1");
      return CutStrategy::quantiles(static_cast<std::size_t>(n));
    }
    throw InputError("cuts: unknown strategy '" + s + "'");
  });
}

/// Cut points document written next to a PED CSV.
inline json ped_meta_to_json(const PedFrame& ped) {
  return json{{"kappa", ped.cuts.values()},     {"n_causes", ped.n_causes},
              {"expanded", ped.expanded},       {"features", ped.feature_names},
              {"has_clusters", ped.has_clusters}, {"n_records", ped.n_records},
              {"admin_censored", ped.admin_censored}};
}

struct PedMeta {
  CutPoints cuts;
  int n_causes = 1;
  bool expanded = false;
};

inline PedMeta ped_meta_from_json(const json& j) {
  return detail::guard("cuts document", [&] {
    PedMeta m;
    m.cuts = CutPoints(j.at("kappa").get<std::vector<double>>());
    m.n_causes = j.value("n_causes", 1);
    m.expanded = j.value("expanded", false);
    return m;
  });
}

// ---------------------------------------------------------------------------
// Model specification

inline TermSpec term_spec_from_json(const json& j) {
  return detail::guard("model term", [&] {
    detail::check_keys(j,
                       {"kind", "feature", "features", "basis", "n_basis", "degree", "penalty_order", "lo", "hi",
                        "lo2", "hi2", "penalty"},
                       "model term");
    TermSpec t;
    t.kind = term_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("feature")) t.features = {j.at("feature").get<std::string>()};
    if (j.contains("features")) t.features = j.at("features").get<std::vector<std::string>>();
    if (j.contains("basis")) t.basis = basis_kind_from_string(j.at("basis").get<std::string>());
    if (j.contains("n_basis")) {
      const auto& nb = j.at("n_basis");
      t.n_basis = nb.is_array() ? nb.get<std::vector<int>>() : std::vector<int>{nb.get<int>()};
      if (t.n_basis.empty()) throw InputError("model term: n_basis is empty");
    }
    t.degree = j.value("degree", t.degree);
    t.penalty_order = j.value("penalty_order", t.penalty_order);
    if (j.contains("lo")) t.lo = j.at("lo").get<double>();
    if (j.contains("hi")) t.hi = j.at("hi").get<double>();
    if (j.contains("lo2")) t.lo2 = j.at("lo2").get<double>();
    if (j.contains("hi2")) t.hi2 = j.at("hi2").get<double>();
    t.penalty = j.value("penalty", t.penalty);
    return t;
  });
}

inline json to_json(const TermSpec& t) {
  json j{{"kind", to_string(t.kind)}};
  if (!t.features.empty()) j["features"] = t.features;
  if (t.kind == TermKind::smooth || t.kind == TermKind::smooth_time || t.kind == TermKind::tensor) {
    j["basis"] = to_string(t.basis);
    j["n_basis"] = t.n_basis;
    j["degree"] = t.degree;
    j["penalty_order"] = t.penalty_order;
    if (t.lo) j["lo"] = *t.lo;
    if (t.hi) j["hi"] = *t.hi;
    if (t.lo2) j["lo2"] = *t.lo2;
    if (t.hi2) j["hi2"] = *t.hi2;
    j["penalty"] = t.penalty;
  }
  return j;
}

inline DeepSpec deep_spec_from_json(const json& j) {
  return detail::guard("deep head", [&] {
    detail::check_keys(j, {"inputs", "widths", "activation", "time_input", "shared_trunk"}, "deep head");
    DeepSpec d;
    d.inputs = j.value("inputs", d.inputs);
    d.widths = j.value("widths", d.widths);
    if (j.contains("activation")) d.activation = activation_from_string(j.at("activation").get<std::string>());
    d.time_input = j.value("time_input", d.time_input);
    d.shared_trunk = j.value("shared_trunk", d.shared_trunk);
    return d;
  });
}

inline json to_json(const DeepSpec& d) {
  return json{{"inputs", d.inputs},
              {"widths", d.widths},
              {"activation", to_string(d.activation)},
              {"time_input", d.time_input},
              {"shared_trunk", d.shared_trunk}};
}

inline ModelSpec model_spec_from_json(const json& j) {
  return detail::guard("model spec", [&] {
    detail::check_keys(j, {"cuts", "max_intervals", "n_causes", "terms", "deep"}, "model spec");
    ModelSpec s;
    if (j.contains("cuts")) s.cuts = cut_strategy_from_json(j.at("cuts"));
    s.max_intervals = j.value("max_intervals", std::size_t{0});
    s.n_causes = j.value("n_causes", 0);
    for (const auto& t : j.value("terms", json::array())) s.terms.push_back(term_spec_from_json(t));
    if (j.contains("deep") && !j.at("deep").is_null()) s.deep = deep_spec_from_json(j.at("deep"));
    return s;
  });
}

inline json to_json(const ModelSpec& s) {
  json terms = json::array();
  for (const auto& t : s.terms) terms.push_back(to_json(t));
  json j{{"cuts", to_json(s.cuts)}, {"max_intervals", s.max_intervals}, {"n_causes", s.n_causes}, {"terms", terms}};
  if (s.deep) j["deep"] = to_json(*s.deep);
  return j;
}

// ---------------------------------------------------------------------------
// Training configuration

inline TrainConfig train_config_from_json(const json& j) {
  return detail::guard("training config", [&] {
    detail::check_keys(j,
                       {"learning_rate", "structured_learning_rate", "batch_size", "max_epochs", "patience",
                        "validation_fraction", "psi_scale", "lambda_re", "weight_decay", "grid", "seed",
                        "polish_structured", "newton_max_iter"},
                       "training config");
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("structured_learning_rate") && !j.at("structured_learning_rate").is_null())
      c.structured_learning_rate = j.at("structured_learning_rate").get<double>();
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.penalty.psi_scale = j.value("psi_scale", c.penalty.psi_scale);
    c.penalty.lambda_re = j.value("lambda_re", c.penalty.lambda_re);
    c.penalty.weight_decay = j.value("weight_decay", c.penalty.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.polish_structured = j.value("polish_structured", c.polish_structured);
    c.newton_max_iter = j.value("newton_max_iter", c.newton_max_iter);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      detail::check_keys(g, {"psi_scale", "lambda_re", "learning_rate", "pamm_warm_start"}, "grid");
      c.grid.psi_scales = g.value("psi_scale", std::vector<double>{});
      c.grid.lambda_re = g.value("lambda_re", std::vector<double>{});
      c.grid.learning_rates = g.value("learning_rate", std::vector<double>{});
      c.grid.pamm_warm_start = g.value("pamm_warm_start", true);
    }
    c.validate();
    return c;
  });
}

inline json to_json(const TrainConfig& c) {
  json j{{"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"validation_fraction", c.validation_fraction},
         {"psi_scale", c.penalty.psi_scale},
         {"lambda_re", c.penalty.lambda_re},
         {"weight_decay", c.penalty.weight_decay},
         {"seed", c.seed},
         {"polish_structured", c.polish_structured},
         {"newton_max_iter", c.newton_max_iter},
         {"grid",
          {{"psi_scale", c.grid.psi_scales},
           {"lambda_re", c.grid.lambda_re},
           {"learning_rate", c.grid.learning_rates},
           {"pamm_warm_start", c.grid.pamm_warm_start}}}};
  if (c.structured_learning_rate) j["structured_learning_rate"] = *c.structured_learning_rate;
  return j;
}

// ---------------------------------------------------------------------------
// Fitted model

inline json to_json(const BasisSpec& b) {
  return json{{"kind", to_string(b.kind)}, {"degree", b.degree},          {"n_basis", b.n_basis}, {"lo", b.lo},
              {"hi", b.hi},              {"penalty_order", b.penalty_order}, {"knots", b.knots}};
}

inline BasisSpec basis_from_json(const json& j) {
  BasisSpec b;
  b.kind = basis_kind_from_string(j.at("kind").get<std::string>());
  b.degree = j.at("degree").get<int>();
  b.n_basis = j.at("n_basis").get<int>();
  b.lo = j.at("lo").get<double>();
  b.hi = j.at("hi").get<double>();
  b.penalty_order = j.at("penalty_order").get<int>();
  b.knots = j.at("knots").get<std::vector<double>>();
  b.validate();
  return b;
}

inline json to_json(const HazardModel& m) {
  json terms = json::array();
  for (const auto& t : m.terms) {
    json jt{{"kind", to_string(t.kind)}, {"features", t.features}, {"offset", t.offset}};
    if (t.kind == TermKind::smooth || t.kind == TermKind::smooth_time || t.kind == TermKind::tensor) {
      jt["basis"] = to_json(t.basis);
      jt["strength"] = t.strength;
    }
    if (t.kind == TermKind::tensor) jt["basis2"] = to_json(t.basis2);
    if (t.kind == TermKind::random_effect) jt["levels"] = t.levels;
    if (t.kind == TermKind::interval) jt["n_intervals"] = t.n_intervals;
    terms.push_back(std::move(jt));
  }
  json j{{"format", "pamm-model"},
         {"version", 1},
         {"cuts", m.cuts.values()},
         {"n_causes", m.n_causes},
         {"features", m.feature_names},
         {"terms", terms},
         {"weights", detail::matrix_to_json(m.weights)},
         {"penalty",
          {{"psi_scale", m.penalty.psi_scale},
           {"lambda_re", m.penalty.lambda_re},
           {"weight_decay", m.penalty.weight_decay}}}};
  if (m.deep) {
    const auto& d = *m.deep;
    json trunks = json::array();
    for (const auto& trunk : d.trunks) {
      json layers = json::array();
      for (const auto& l : trunk)
        layers.push_back({{"weight", detail::matrix_to_json(l.weight)}, {"bias", detail::vector_to_json(l.bias)}});
      trunks.push_back(std::move(layers));
    }
    j["deep"] = {{"inputs", d.inputs},
                 {"widths", d.widths},
                 {"activation", to_string(d.activation)},
                 {"time_input", d.time_input},
                 {"shared_trunk", d.shared_trunk},
                 {"center", detail::vector_to_json(d.center)},
                 {"scale", detail::vector_to_json(d.scale)},
                 {"trunks", trunks},
                 {"gamma", detail::matrix_to_json(d.gamma)}};
  }
  return j;
}

inline HazardModel model_from_json(const json& j) {
  return detail::guard("model document", [&] {
    if (j.value("format", "") != "pamm-model") throw InputError("not a fitted model document");
    HazardModel m;
    m.cuts = CutPoints(j.at("cuts").get<std::vector<double>>());
    m.n_causes = j.at("n_causes").get<int>();
    if (m.n_causes < 1) throw InputError("model: n_causes must be >= 1");
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    for (const auto& jt : j.at("terms")) {
      StructuredTerm t;
      t.kind = term_kind_from_string(jt.at("kind").get<std::string>());
      t.features = jt.at("features").get<std::vector<std::string>>();
      if (jt.contains("basis")) t.basis = basis_from_json(jt.at("basis"));
      if (jt.contains("basis2")) t.basis2 = basis_from_json(jt.at("basis2"));
      t.strength = jt.value("strength", 1.0);
      t.levels = jt.value("levels", std::vector<std::string>{});
      t.n_intervals = jt.value("n_intervals", std::size_t{0});
      for (const auto& f : t.features) detail::feature_index(m.feature_names, f);
      t.build_penalty();
      m.terms.push_back(std::move(t));
    }
    assign_offsets(m);
    m.weights = detail::matrix_from_json(j.at("weights"), static_cast<Eigen::Index>(m.n_columns()), m.n_causes);
    const auto& p = j.at("penalty");
    m.penalty.psi_scale = p.at("psi_scale").get<double>();
    m.penalty.lambda_re = p.at("lambda_re").get<double>();
    m.penalty.weight_decay = p.at("weight_decay").get<double>();
    if (j.contains("deep")) {
      const auto& jd = j.at("deep");
      DeepHead d;
      d.inputs = jd.at("inputs").get<std::vector<std::string>>();
      d.widths = jd.at("widths").get<std::vector<int>>();
      if (d.widths.empty()) throw InputError("model: deep head has no layers");
      d.activation = activation_from_string(jd.at("activation").get<std::string>());
      d.time_input = jd.at("time_input").get<bool>();
      d.shared_trunk = jd.at("shared_trunk").get<bool>();
      for (const auto& f : d.inputs) detail::feature_index(m.feature_names, f);
      const auto dim = static_cast<Eigen::Index>(d.input_dim());
      d.center = detail::vector_from_json(jd.at("center"), dim);
      d.scale = detail::vector_from_json(jd.at("scale"), dim);
      const std::size_t n_trunks = d.shared_trunk ? 1 : static_cast<std::size_t>(m.n_causes);
      if (jd.at("trunks").size() != n_trunks) throw InputError("model: wrong number of deep trunks");
      for (const auto& jtr : jd.at("trunks")) {
        if (jtr.size() != d.widths.size()) throw InputError("model: wrong number of deep layers");
        Trunk trunk;
        Eigen::Index in = dim;
        for (std::size_t l = 0; l < d.widths.size(); ++l) {
          DenseLayer layer;
          layer.weight = detail::matrix_from_json(jtr[l].at("weight"), d.widths[l], in);
          layer.bias = detail::vector_from_json(jtr[l].at("bias"), d.widths[l]);
          trunk.push_back(std::move(layer));
          in = d.widths[l];
        }
        d.trunks.push_back(std::move(trunk));
      }
      d.gamma = detail::matrix_from_json(jd.at("gamma"), d.widths.back(), m.n_causes);
      m.deep = std::move(d);
    }
    return m;
  });
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train", e.train_loss}, {"val", e.val_loss}});
  return json{{"best_epoch", r.best_epoch},
              {"train_objective", r.train_objective},
              {"val_loss", r.val_loss},
              {"val_deviance", r.val_deviance},
              {"converged", r.converged},
              {"newton_iterations", r.newton_iterations},
              {"n_train_subjects", r.n_train_subjects},
              {"n_val_subjects", r.n_val_subjects},
              {"psi_scale", r.penalty.psi_scale},
              {"lambda_re", r.penalty.lambda_re},
              {"weight_decay", r.penalty.weight_decay},
              {"learning_rate", r.learning_rate},
              {"unseen_clusters", r.unseen_clusters},
              {"epochs", epochs}};
}

inline void write_epochs_csv(std::ostream& out, const TrainReport& r) {
  out << "epoch,train,val\n";
  for (const auto& e : r.epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
}

inline json to_json(const EvalResult& e) {
  return json{{"q25", e.ibs[0]},
              {"q50", e.ibs[1]},
              {"q75", e.ibs[2]},
              {"quartile_times", e.quartile_times},
              {"brier_at_quartiles", e.brier_at},
              {"n_events", e.n_events},
              {"warnings", {{"ipcw_dropped", e.dropped}, {"extrapolated", e.extrapolated}}}};
}

}  // namespace pamm
