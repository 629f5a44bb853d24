#include "padsim/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "padsim/error.hpp"

namespace padsim::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + what);
}

template <typename T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

OutcomeVector outcome_vector(const json& j, const std::string& what) {
  OutcomeVector v{};
  if (j.is_array()) {
    if (j.size() != static_cast<std::size_t>(kOutcomeCount))
      throw ConfigError(what + " needs " + std::to_string(kOutcomeCount) + " entries");
    for (int k = 0; k < kOutcomeCount; ++k) v[k] = j[k].get<double>();
    return v;
  }
  if (!j.is_object()) throw ConfigError(what + " must be an array or an object");
  if (j.size() != static_cast<std::size_t>(kOutcomeCount))
    throw ConfigError(what + " needs every outcome");
  for (const auto& [name, value] : j.items()) v[index(outcome_from_name(name))] = value.get<double>();
  return v;
}

json outcome_object(const OutcomeVector& v) {
  json j = json::object();
  for (int k = 0; k < kOutcomeCount; ++k) j[std::string(kOutcomeNames[k])] = v[k];
  return j;
}

SubpopulationParams subpopulation_from_json(const json& j, const std::string& what) {
  check_keys(j, {"intercept", "year", "age", "apoe4", "residual_sd", "random_effects",
                 "random_effects_cov"},
             what);
  SubpopulationParams s;
  for (const char* key : {"intercept", "year", "age", "apoe4", "residual_sd"})
    if (!j.contains(key)) throw ConfigError(what + " is missing '" + key + "'");
  s.intercept = outcome_vector(j["intercept"], what + ".intercept");
  s.year = outcome_vector(j["year"], what + ".year");
  s.age = outcome_vector(j["age"], what + ".age");
  s.apoe4 = outcome_vector(j["apoe4"], what + ".apoe4");
  s.residual_sd = outcome_vector(j["residual_sd"], what + ".residual_sd");
  if (j.contains("random_effects_cov")) {
    const json& m = j["random_effects_cov"];
    if (!m.is_array() || m.size() != static_cast<std::size_t>(kRandomEffects))
      throw ConfigError(what + ".random_effects_cov must be 14 x 14");
    for (int a = 0; a < kRandomEffects; ++a) {
      if (m[a].size() != static_cast<std::size_t>(kRandomEffects))
        throw ConfigError(what + ".random_effects_cov must be 14 x 14");
      for (int b = 0; b < kRandomEffects; ++b) s.random_effects_cov(a, b) = m[a][b].get<double>();
    }
  } else if (j.contains("random_effects")) {
    const json& r = j["random_effects"];
    check_keys(r, {"intercept_sd", "slope_sd", "within_type_corr", "intercept_slope_corr"},
               what + ".random_effects");
    RandomEffectsShape shape;
    shape.intercept_sd = get(r, "intercept_sd", shape.intercept_sd);
    shape.slope_sd = get(r, "slope_sd", shape.slope_sd);
    shape.within_type_corr = get(r, "within_type_corr", shape.within_type_corr);
    shape.intercept_slope_corr = get(r, "intercept_slope_corr", shape.intercept_slope_corr);
    s.random_effects_cov = shape.covariance();
  } else {
    throw ConfigError(what + " needs random_effects or random_effects_cov");
  }
  return s;
}

json subpopulation_json(const SubpopulationParams& s) {
  json cov = json::array();
  for (int a = 0; a < kRandomEffects; ++a) {
    json row = json::array();
    for (int b = 0; b < kRandomEffects; ++b) row.push_back(s.random_effects_cov(a, b));
    cov.push_back(row);
  }
  return {{"intercept", outcome_object(s.intercept)},
          {"year", outcome_object(s.year)},
          {"age", outcome_object(s.age)},
          {"apoe4", outcome_object(s.apoe4)},
          {"residual_sd", outcome_object(s.residual_sd)},
          {"random_effects_cov", cov}};
}

ArmDropout arm_dropout_from_json(const json& j, ArmDropout a, const std::string& what) {
  check_keys(j, {"inefficacy_prob", "intolerability_prob", "mcar_annual_rate"}, what);
  a.inefficacy_prob = get(j, "inefficacy_prob", a.inefficacy_prob);
  a.intolerability_prob = get(j, "intolerability_prob", a.intolerability_prob);
  a.mcar_annual_rate = get(j, "mcar_annual_rate", a.mcar_annual_rate);
  return a;
}

json arm_dropout_json(const ArmDropout& a) {
  return {{"inefficacy_prob", a.inefficacy_prob},
          {"intolerability_prob", a.intolerability_prob},
          {"mcar_annual_rate", a.mcar_annual_rate}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s.empty() || s == "NA" || s == "nan" || s == "NaN") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError("bad number '" + s + "'");
  }
}

int parse_int(const std::string& s) {
  const double v = parse_double(s);
  if (!std::isfinite(v) || v != std::floor(v)) throw DataError("bad integer '" + s + "'");
  return static_cast<int>(v);
}

Arm parse_arm(const std::string& s) {
  if (s == "placebo" || s == "0") return Arm::Placebo;
  if (s == "treatment" || s == "1") return Arm::Treatment;
  throw DataError("bad arm '" + s + "'");
}

const char* arm_text(Arm a) { return a == Arm::Placebo ? "placebo" : "treatment"; }

// Data lines of a CSV file after '#' comments; the first is the column header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (!header) {
      if (cells != columns) throw DataError(path.string() + ": unexpected columns '" + line + "'");
      header = true;
      continue;
    }
    if (cells.size() != columns.size())
      throw DataError(path.string() + ": wrong number of cells in '" + line + "'");
    rows.push_back(std::move(cells));
  }
  if (!header) throw DataError(path.string() + ": missing column header");
  return rows;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

json to_json(const GenerativeParams& params) {
  return {{"progressor_proportion", params.progressor_proportion},
          {"progressor", subpopulation_json(params.progressor)},
          {"stable", subpopulation_json(params.stable)}};
}

GenerativeParams params_from_json(const json& j) {
  check_keys(j, {"progressor_proportion", "progressor", "stable"}, "params");
  if (!j.contains("progressor") || !j.contains("stable"))
    throw ConfigError("params need progressor and stable blocks");
  GenerativeParams p;
  p.progressor = subpopulation_from_json(j["progressor"], "params.progressor");
  p.stable = subpopulation_from_json(j["stable"], "params.stable");
  p.progressor_proportion = get(j, "progressor_proportion", p.progressor_proportion);
  p.validate();
  return p;
}

json to_json(const TrialDesign& d) {
  return {{"n_total", d.n_total},
          {"allocation", {d.allocation_treatment, d.allocation_placebo}},
          {"visit_grid", d.visit_grid},
          {"analysis_horizon", d.analysis_horizon},
          {"enrollment_duration", d.enrollment_duration},
          {"max_follow_up", d.max_follow_up}};
}

TrialDesign design_from_json(const json& j, TrialDesign d) {
  check_keys(j, {"n_total", "allocation", "visit_grid", "analysis_horizon", "enrollment_duration",
                 "max_follow_up"},
             "design");
  d.n_total = get(j, "n_total", d.n_total);
  if (j.contains("allocation")) {
    const auto a = j["allocation"].get<std::vector<int>>();
    if (a.size() != 2) throw ConfigError("allocation must be [treatment, placebo]");
    d.allocation_treatment = a[0];
    d.allocation_placebo = a[1];
  }
  d.visit_grid = get(j, "visit_grid", d.visit_grid);
  d.analysis_horizon = get(j, "analysis_horizon", d.analysis_horizon);
  d.enrollment_duration = get(j, "enrollment_duration", d.enrollment_duration);
  d.max_follow_up = get(j, "max_follow_up", d.max_follow_up);
  d.validate();
  return d;
}

json to_json(const DropoutSpec& s) {
  return {{"treatment_null", arm_dropout_json(s.treatment_null)},
          {"treatment_alternative", arm_dropout_json(s.treatment_alternative)},
          {"placebo", arm_dropout_json(s.placebo)},
          {"intolerability_time", s.intolerability_time},
          {"inefficacy_time", s.inefficacy_time},
          {"intolerability_benefit_retention", s.intolerability_benefit_retention}};
}

DropoutSpec dropout_from_json(const json& j, DropoutSpec s) {
  if (j.is_string() && j.get<std::string>() == "none") return DropoutSpec::none();
  check_keys(j, {"treatment_null", "treatment_alternative", "placebo", "intolerability_time",
                 "inefficacy_time", "intolerability_benefit_retention"},
             "dropout");
  if (j.contains("treatment_null"))
    s.treatment_null = arm_dropout_from_json(j["treatment_null"], s.treatment_null, "dropout.treatment_null");
  if (j.contains("treatment_alternative"))
    s.treatment_alternative = arm_dropout_from_json(j["treatment_alternative"], s.treatment_alternative,
                                                    "dropout.treatment_alternative");
  if (j.contains("placebo")) s.placebo = arm_dropout_from_json(j["placebo"], s.placebo, "dropout.placebo");
  s.intolerability_time = get(j, "intolerability_time", s.intolerability_time);
  s.inefficacy_time = get(j, "inefficacy_time", s.inefficacy_time);
  s.intolerability_benefit_retention =
      get(j, "intolerability_benefit_retention", s.intolerability_benefit_retention);
  s.validate();
  return s;
}

json to_json(const ScenarioConfig& c) {
  const auto& f = c.forest_training.forest;
  return {{"seed", c.seed},
          {"replicates", c.replicates},
          {"effects", c.effects},
          {"sample_sizes", c.sample_sizes},
          {"alpha", c.alpha},
          {"design", to_json(c.design)},
          {"params", to_json(c.params)},
          {"dropout", to_json(c.dropout)},
          {"forest", c.forest_path},
          {"labeler", {{"cdrsb", c.labeler.cdrsb}, {"logmem", c.labeler.logmem}, {"faq", c.labeler.faq}}},
          {"forest_training",
           {{"rows", c.forest_training.rows},
            {"n_trees", f.n_trees},
            {"mtry", f.mtry},
            {"min_node_size", f.min_node_size}}},
          {"calibration",
           {{"target", c.calibration.target},
            {"tolerance", c.calibration.tolerance},
            {"subjects", c.calibration.subjects},
            {"max_steps", c.calibration.max_steps}}},
          {"replicate",
           {{"complete", c.replicate.complete},
            {"mehrotra", c.replicate.mehrotra},
            {"cox", c.replicate.cox}}},
          {"optimizer",
           {{"max_simplex_iterations", c.optimizer.max_simplex_iterations},
            {"simplex_tolerance", c.optimizer.simplex_tolerance},
            {"max_newton_iterations", c.optimizer.max_newton_iterations},
            {"gradient_tolerance", c.optimizer.gradient_tolerance}}},
          {"mmrm_covariance", covariance_name(c.mmrm_covariance)},
          {"write_curves", c.write_curves}};
}

ScenarioConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"seed", "replicates", "effects", "sample_sizes", "alpha", "design", "params",
                 "dropout", "forest", "labeler", "forest_training", "calibration", "replicate",
                 "optimizer", "mmrm_covariance", "write_curves"},
             "config");
  ScenarioConfig c;
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.replicates = get(j, "replicates", c.replicates);
  c.effects = get(j, "effects", c.effects);
  c.sample_sizes = get(j, "sample_sizes", c.sample_sizes);
  c.alpha = get(j, "alpha", c.alpha);
  if (j.contains("design")) c.design = design_from_json(j["design"]);
  c.design.seed = c.seed;
  if (j.contains("params")) {
    const json& p = j["params"];
    c.params = p.is_string() ? params_from_json(read_json(resolve(base_dir, p.get<std::string>())))
                             : params_from_json(p);
  }
  if (j.contains("dropout")) c.dropout = dropout_from_json(j["dropout"]);
  if (j.contains("forest")) {
    const std::string f = j["forest"].get<std::string>();
    c.forest_path = f.empty() ? f : resolve(base_dir, f).string();
  }
  if (j.contains("labeler")) {
    const json& l = j["labeler"];
    check_keys(l, {"cdrsb", "logmem", "faq"}, "labeler");
    c.labeler.cdrsb = get(l, "cdrsb", c.labeler.cdrsb);
    c.labeler.logmem = get(l, "logmem", c.labeler.logmem);
    c.labeler.faq = get(l, "faq", c.labeler.faq);
  }
  if (j.contains("forest_training")) {
    const json& f = j["forest_training"];
    check_keys(f, {"rows", "n_trees", "mtry", "min_node_size"}, "forest_training");
    c.forest_training.rows = get(f, "rows", c.forest_training.rows);
    auto& o = c.forest_training.forest;
    o.n_trees = get(f, "n_trees", o.n_trees);
    o.mtry = get(f, "mtry", o.mtry);
    o.min_node_size = get(f, "min_node_size", o.min_node_size);
  }
  if (j.contains("calibration")) {
    const json& k = j["calibration"];
    check_keys(k, {"target", "tolerance", "subjects", "max_steps"}, "calibration");
    c.calibration.target = get(k, "target", c.calibration.target);
    c.calibration.tolerance = get(k, "tolerance", c.calibration.tolerance);
    c.calibration.subjects = get(k, "subjects", c.calibration.subjects);
    c.calibration.max_steps = get(k, "max_steps", c.calibration.max_steps);
  }
  if (j.contains("replicate")) {
    const json& r = j["replicate"];
    check_keys(r, {"complete", "mehrotra", "cox"}, "replicate");
    c.replicate.complete = get(r, "complete", c.replicate.complete);
    c.replicate.mehrotra = get(r, "mehrotra", c.replicate.mehrotra);
    c.replicate.cox = get(r, "cox", c.replicate.cox);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, {"max_simplex_iterations", "simplex_tolerance", "max_newton_iterations",
                   "gradient_tolerance"},
               "optimizer");
    c.optimizer.max_simplex_iterations = get(o, "max_simplex_iterations", c.optimizer.max_simplex_iterations);
    c.optimizer.simplex_tolerance = get(o, "simplex_tolerance", c.optimizer.simplex_tolerance);
    c.optimizer.max_newton_iterations = get(o, "max_newton_iterations", c.optimizer.max_newton_iterations);
    c.optimizer.gradient_tolerance = get(o, "gradient_tolerance", c.optimizer.gradient_tolerance);
  }
  if (j.contains("mmrm_covariance"))
    c.mmrm_covariance = covariance_from_name(get<std::string>(j, "mmrm_covariance", ""));
  c.write_curves = get(j, "write_curves", c.write_curves);
  c.validate();
  return c;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path), path.parent_path());
}

std::string config_hash(const ScenarioConfig& config) {
  json j = to_json(config);
  j.erase("forest");  // where the artifact lives does not change results
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_header(const ScenarioConfig& config) {
  return "# padsim config_hash=" + config_hash(config) + " seed=" + std::to_string(config.seed);
}

json to_json(const ForestArtifact& a) {
  const diagnosis::Forest& f = a.forest;
  json trees = json::array();
  for (const diagnosis::DecisionTree& t : f.trees) {
    json nodes = json::array();
    for (const diagnosis::TreeNode& n : t.nodes) {
      if (n.is_leaf())
        nodes.push_back({static_cast<int>(n.leaf)});
      else
        nodes.push_back({n.feature, n.threshold, n.left, n.right});
    }
    trees.push_back(std::move(nodes));
  }
  json oob = json::array();
  for (const auto& v : f.oob_votes) oob.push_back({v[0], v[1]});
  json labels = json::array();
  for (Diagnosis d : f.training_labels) labels.push_back(static_cast<int>(d));
  return {{"format", "padsim-forest"},
          {"version", 1},
          {"threshold", a.threshold},
          {"weights", {{"cdrsb", a.weights.cdrsb}, {"logmem", a.weights.logmem}, {"faq", a.weights.faq}}},
          {"mtry", f.mtry},
          {"min_node_size", f.min_node_size},
          {"feature_count", f.feature_count},
          {"oob_votes", oob},
          {"training_labels", labels},
          {"trees", trees}};
}

ForestArtifact forest_from_json(const json& j) {
  try {
    if (j.at("format") != "padsim-forest") throw ConfigError("not a forest artifact");
    if (j.at("version") != 1) throw ConfigError("unsupported forest artifact version");
    ForestArtifact a;
    a.threshold = j.at("threshold").get<double>();
    const json& w = j.at("weights");
    a.weights = {w.at("cdrsb").get<double>(), w.at("logmem").get<double>(), w.at("faq").get<double>()};
    diagnosis::Forest& f = a.forest;
    f.mtry = j.at("mtry").get<int>();
    f.min_node_size = j.at("min_node_size").get<int>();
    f.feature_count = j.at("feature_count").get<int>();
    for (const json& v : j.at("oob_votes")) f.oob_votes.push_back({v[0].get<int>(), v[1].get<int>()});
    for (const json& l : j.at("training_labels")) f.training_labels.push_back(static_cast<Diagnosis>(l.get<int>()));
    for (const json& t : j.at("trees")) {
      diagnosis::DecisionTree tree;
      for (const json& n : t) {
        diagnosis::TreeNode node;
        if (n.size() == 1) {
          node.leaf = static_cast<Diagnosis>(n[0].get<int>());
        } else {
          node.feature = n[0].get<int>();
          node.threshold = n[1].get<double>();
          node.left = n[2].get<int>();
          node.right = n[3].get<int>();
          if (node.feature >= f.feature_count) throw ConfigError("forest node feature out of range");
        }
        tree.nodes.push_back(node);
      }
      const int count = static_cast<int>(tree.nodes.size());
      for (const diagnosis::TreeNode& n : tree.nodes)
        if (!n.is_leaf() && (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count))
          throw ConfigError("forest node child out of range");
      if (tree.nodes.empty()) throw ConfigError("empty tree in forest artifact");
      f.trees.push_back(std::move(tree));
    }
    if (f.trees.empty()) throw ConfigError("forest artifact has no trees");
    f.compile();
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed forest artifact: ") + e.what());
  }
}

void save_forest(const ForestArtifact& artifact, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << to_json(artifact).dump() << '\n';
}

ForestArtifact load_forest(const std::filesystem::path& path) { return forest_from_json(read_json(path)); }

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

void write_replicates(const std::vector<ReplicateRow>& rows, const std::filesystem::path& path,
                      const std::string& header) {
  auto out = open_out(path);
  if (!header.empty()) out << header << '\n';
  out << "effect,n,replicate,model,dataset,estimand,estimate,se,p,converged,message\n";
  for (const ReplicateRow& r : rows) {
    std::string msg = r.message;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    out << format_double(r.effect) << ',' << r.n << ',' << r.replicate << ',' << r.model << ','
        << r.dataset << ',' << estimand_name(r.estimand) << ',' << format_double(r.estimate) << ','
        << format_double(r.se) << ',' << format_double(r.p) << ',' << (r.converged ? 1 : 0) << ','
        << msg << '\n';
  }
}

std::vector<ReplicateRow> read_replicates(const std::filesystem::path& path) {
  const auto rows = read_csv(path, {"effect", "n", "replicate", "model", "dataset", "estimand",
                                    "estimate", "se", "p", "converged", "message"});
  std::vector<ReplicateRow> out;
  for (const auto& c : rows) {
    ReplicateRow r;
    r.effect = parse_double(c[0]);
    r.n = parse_int(c[1]);
    r.replicate = parse_int(c[2]);
    r.model = c[3];
    r.dataset = c[4];
    r.estimand = estimand_from_name(c[5]);
    r.estimate = parse_double(c[6]);
    r.se = parse_double(c[7]);
    r.p = parse_double(c[8]);
    r.converged = c[9] == "1";
    r.message = c[10];
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (in && std::getline(in, line) && line.starts_with("#")) return line;
  return {};
}

void write_longitudinal(const LongitudinalDataset& data, const std::filesystem::path& path,
                        const std::string& header) {
  auto out = open_out(path);
  if (!header.empty()) out << header << '\n';
  out << "subject,arm,time,pacc,baseline_pacc,age,apoe4\n";
  for (const LongitudinalRow& r : data.rows)
    out << r.subject << ',' << arm_text(r.arm) << ',' << format_double(r.time) << ','
        << format_double(r.pacc) << ',' << format_double(r.baseline_pacc) << ','
        << format_double(r.age) << ',' << r.apoe4 << '\n';
}

LongitudinalDataset read_longitudinal(const std::filesystem::path& path,
                                      std::vector<double> visit_grid, double horizon) {
  LongitudinalDataset data;
  data.visit_grid = std::move(visit_grid);
  data.horizon = horizon;
  for (const auto& c :
       read_csv(path, {"subject", "arm", "time", "pacc", "baseline_pacc", "age", "apoe4"})) {
    const double t = parse_double(c[2]);
    if (t > horizon + 1e-9) continue;
    data.rows.push_back({parse_int(c[0]), parse_arm(c[1]), t, parse_double(c[3]),
                         parse_double(c[4]), parse_double(c[5]), parse_int(c[6])});
  }
  data.validate();
  return data;
}

void write_survival(const SurvivalDataset& data, const std::filesystem::path& path,
                    const std::string& header) {
  auto out = open_out(path);
  if (!header.empty()) out << header << '\n';
  out << "subject,arm,time,event,age,apoe4\n";
  for (const SurvivalRow& r : data.rows)
    out << r.subject << ',' << arm_text(r.arm) << ',' << format_double(r.time) << ','
        << (r.event ? 1 : 0) << ',' << format_double(r.age) << ',' << r.apoe4 << '\n';
}

SurvivalDataset read_survival(const std::filesystem::path& path) {
  SurvivalDataset data;
  for (const auto& c : read_csv(path, {"subject", "arm", "time", "event", "age", "apoe4"}))
    data.rows.push_back({parse_int(c[0]), parse_arm(c[1]), parse_double(c[2]), parse_int(c[3]) != 0,
                         parse_double(c[4]), parse_int(c[5])});
  data.validate();
  return data;
}

}  // namespace padsim::io
