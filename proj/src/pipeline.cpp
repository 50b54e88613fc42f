#include "rsfc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <set>

#include "rsfc/clustering.hpp"
#include "rsfc/connectivity.hpp"
#include "rsfc/io.hpp"
#include "rsfc/netmetrics.hpp"
#include "rsfc/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rsfc::pipeline {

std::vector<int> KRange::values() const {
  std::vector<int> out;
  for (int k = k_min; k <= k_max; ++k) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void read_krange(const json& obj, KRange& k, const std::string& where) {
  check_keys(obj, {"k_min", "k_max", "n_restarts", "max_iter"}, where);
  read_opt(obj, "k_min", k.k_min, where);
  read_opt(obj, "k_max", k.k_max, where);
  read_opt(obj, "n_restarts", k.n_restarts, where);
  read_opt(obj, "max_iter", k.max_iter, where);
}

json krange_json(const KRange& k) {
  return {{"k_min", k.k_min}, {"k_max", k.k_max}, {"n_restarts", k.n_restarts},
          {"max_iter", k.max_iter}};
}

std::string tolerance_mode(const Tolerance& t) {
  return t.kind == Tolerance::Kind::Absolute ? "absolute" : "fraction_of_sd";
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"manifest", "roi_table", "out_dir", "ground_truth", "seed", "workers", "entropy",
              "stage_bins", "stage_clustering", "classification", "connectivity",
              "network_clustering", "tsne", "trends"},
             "config");
  PipelineConfig c;
  std::string s;
  if (!doc.contains("manifest")) throw ConfigError("config: 'manifest' is required");
  read_opt(doc, "manifest", s, "config");
  c.manifest = resolve(base_dir, s);
  s.clear();
  read_opt(doc, "roi_table", s, "config");
  c.roi_table = resolve(base_dir, s);
  s = "out";
  read_opt(doc, "out_dir", s, "config");
  c.out_dir = resolve(base_dir, s);
  s.clear();
  read_opt(doc, "ground_truth", s, "config");
  c.ground_truth = resolve(base_dir, s);
  read_opt(doc, "seed", c.seed, "config");
  read_opt(doc, "workers", c.workers, "config");

  if (doc.contains("entropy")) {
    const json& e = doc.at("entropy");
    check_keys(e, {"m", "tau", "r", "r_mode"}, "entropy");
    read_opt(e, "m", c.entropy.m, "entropy");
    read_opt(e, "tau", c.entropy.tau, "entropy");
    read_opt(e, "r", c.entropy.r.value, "entropy");
    std::string mode = "fraction_of_sd";
    read_opt(e, "r_mode", mode, "entropy");
    if (mode == "absolute") c.entropy.r.kind = Tolerance::Kind::Absolute;
    else if (mode == "fraction_of_sd") c.entropy.r.kind = Tolerance::Kind::FractionOfSd;
    else throw ConfigError("entropy.r_mode: expected 'fraction_of_sd' or 'absolute'");
  }
  if (doc.contains("stage_bins")) {
    const json& arr = doc.at("stage_bins");
    if (!arr.is_array()) throw ConfigError("stage_bins: expected an array");
    std::vector<StageBin> bins;
    int index = 1;
    for (const json& b : arr) {
      check_keys(b, {"label", "min_age", "max_age"}, "stage_bins[]");
      StageBin bin{index++, "", 0, 0};
      read_opt(b, "label", bin.label, "stage_bins[]");
      read_opt(b, "min_age", bin.min_age, "stage_bins[]");
      read_opt(b, "max_age", bin.max_age, "stage_bins[]");
      bins.push_back(bin);
    }
    c.stage_bins = StageBins(std::move(bins));
  }
  if (doc.contains("stage_clustering"))
    read_krange(doc.at("stage_clustering"), c.stage_clustering, "stage_clustering");
  if (doc.contains("classification")) {
    const json& cl = doc.at("classification");
    check_keys(cl, {"test_fraction", "classifiers", "hyperparams"}, "classification");
    read_opt(cl, "test_fraction", c.test_fraction, "classification");
    if (cl.contains("classifiers")) {
      c.classifiers.clear();
      for (const json& name : cl.at("classifiers")) {
        if (!name.is_string()) throw ConfigError("classification.classifiers: expected names");
        c.classifiers.push_back(parse_classifier_kind(name.get<std::string>()));
      }
    }
    if (cl.contains("hyperparams")) {
      for (const auto& [kind, params] : cl.at("hyperparams").items()) {
        parse_classifier_kind(kind);
        Hyperparams h;
        for (const auto& [key, value] : params.items()) {
          if (!value.is_number()) throw ConfigError("classification.hyperparams." + kind + "." + key + ": expected a number");
          h[key] = value.get<double>();
        }
        c.hyperparams[kind] = h;
      }
    }
  }
  if (doc.contains("connectivity")) {
    const json& fc = doc.at("connectivity");
    check_keys(fc, {"threshold", "threshold_grid", "clamp_epsilon", "edge_cutoff"}, "connectivity");
    read_opt(fc, "threshold", c.threshold, "connectivity");
    read_opt(fc, "threshold_grid", c.threshold_grid, "connectivity");
    read_opt(fc, "clamp_epsilon", c.clamp_epsilon, "connectivity");
    read_opt(fc, "edge_cutoff", c.edge_cutoff, "connectivity");
  }
  if (doc.contains("network_clustering"))
    read_krange(doc.at("network_clustering"), c.network_clustering, "network_clustering");
  if (doc.contains("tsne")) {
    const json& t = doc.at("tsne");
    check_keys(t, {"initial_dims", "perplexity", "max_iter", "learning_rate", "early_exaggeration",
                   "exaggeration_iters", "neighbors"},
               "tsne");
    read_opt(t, "initial_dims", c.tsne.initial_dims, "tsne");
    read_opt(t, "perplexity", c.tsne.perplexity, "tsne");
    read_opt(t, "max_iter", c.tsne.max_iter, "tsne");
    read_opt(t, "learning_rate", c.tsne.learning_rate, "tsne");
    read_opt(t, "early_exaggeration", c.tsne.early_exaggeration, "tsne");
    read_opt(t, "exaggeration_iters", c.tsne.exaggeration_iters, "tsne");
    read_opt(t, "neighbors", c.embed_neighbors, "tsne");
  }
  if (doc.contains("trends")) {
    const json& t = doc.at("trends");
    check_keys(t, {"lo_pct", "hi_pct", "partition"}, "trends");
    read_opt(t, "lo_pct", c.outlier_lo_pct, "trends");
    read_opt(t, "hi_pct", c.outlier_hi_pct, "trends");
    read_opt(t, "partition", c.metrics_partition, "trends");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(doc, path.parent_path());
}

json PipelineConfig::to_json() const {
  json bins = json::array();
  for (const auto& b : stage_bins.bins())
    bins.push_back({{"label", b.label}, {"min_age", b.min_age}, {"max_age", b.max_age}});
  json names = json::array();
  for (auto k : classifiers) names.push_back(std::string(to_string(k)));
  json hp = json::object();
  for (const auto& [k, h] : hyperparams) hp[k] = h;
  return {{"manifest", manifest.string()},
          {"roi_table", roi_table.string()},
          {"out_dir", out_dir.string()},
          {"ground_truth", ground_truth.string()},
          {"seed", seed},
          {"workers", workers},
          {"entropy",
           {{"m", entropy.m}, {"tau", entropy.tau}, {"r", entropy.r.value},
            {"r_mode", tolerance_mode(entropy.r)}}},
          {"stage_bins", bins},
          {"stage_clustering", krange_json(stage_clustering)},
          {"classification",
           {{"test_fraction", test_fraction}, {"classifiers", names}, {"hyperparams", hp}}},
          {"connectivity",
           {{"threshold", threshold},
            {"threshold_grid", threshold_grid},
            {"clamp_epsilon", clamp_epsilon},
            {"edge_cutoff", edge_cutoff}}},
          {"network_clustering", krange_json(network_clustering)},
          {"tsne",
           {{"initial_dims", tsne.initial_dims},
            {"perplexity", tsne.perplexity},
            {"max_iter", tsne.max_iter},
            {"learning_rate", tsne.learning_rate},
            {"early_exaggeration", tsne.early_exaggeration},
            {"exaggeration_iters", tsne.exaggeration_iters},
            {"neighbors", embed_neighbors}}},
          {"trends",
           {{"lo_pct", outlier_lo_pct}, {"hi_pct", outlier_hi_pct}, {"partition", metrics_partition}}}};
}

void PipelineConfig::validate() const {
  if (manifest.empty()) throw ConfigError("config: manifest path is empty");
  if (!fs::is_regular_file(manifest)) throw ConfigError("manifest not found: " + manifest.string());
  if (!roi_table.empty() && !fs::is_regular_file(roi_table))
    throw ConfigError("ROI table not found: " + roi_table.string());
  if (!ground_truth.empty() && !fs::is_regular_file(ground_truth))
    throw ConfigError("ground truth not found: " + ground_truth.string());
  if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  entropy.validate();
  for (const auto* k : {&stage_clustering, &network_clustering}) {
    if (k->k_min < 1 || k->k_max < k->k_min + 2)
      throw ConfigError("clustering: need 1 <= k_min and at least three k values");
    if (k->n_restarts < 1 || k->max_iter < 1)
      throw ConfigError("clustering: n_restarts and max_iter must be >= 1");
  }
  if (!(test_fraction > 0.0 && test_fraction <= 0.5))
    throw ConfigError("classification.test_fraction must lie in (0, 0.5]");
  if (classifiers.empty()) throw ConfigError("classification.classifiers is empty");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("connectivity.threshold must lie in [0, 1]");
  for (std::size_t i = 0; i < threshold_grid.size(); ++i) {
    if (!(threshold_grid[i] >= 0.0 && threshold_grid[i] <= 1.0))
      throw ConfigError("connectivity.threshold_grid values must lie in [0, 1]");
    if (i > 0 && threshold_grid[i] <= threshold_grid[i - 1])
      throw ConfigError("connectivity.threshold_grid must ascend");
  }
  if (!(clamp_epsilon > 0.0 && clamp_epsilon <= 1e-3))
    throw ConfigError("connectivity.clamp_epsilon must lie in (0, 1e-3]");
  if (!(edge_cutoff >= 0.0 && edge_cutoff <= 1.0)) throw ConfigError("connectivity.edge_cutoff must lie in [0, 1]");
  if (tsne.initial_dims < 1 || tsne.max_iter < 1 || !(tsne.perplexity > 0.0) ||
      !(tsne.learning_rate > 0.0) || embed_neighbors < 1)
    throw ConfigError("tsne: parameters must be positive");
  if (!(outlier_lo_pct >= 0.0 && outlier_lo_pct < outlier_hi_pct && outlier_hi_pct <= 100.0))
    throw ConfigError("trends: need 0 <= lo_pct < hi_pct <= 100");
  if (metrics_partition != "roi_table" && metrics_partition != "clusters")
    throw ConfigError("trends.partition: expected 'roi_table' or 'clusters'");
}

// ---------------------------------------------------------------------------
// Stage graph

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "ingest",          "entropy",  "stage_cluster", "stage_classify",
      "fc_build",        "fc_scan",  "fc_average",    "fc_export",
      "network_cluster", "network_embed", "network_metrics", "trends"};
  return names;
}

std::vector<std::string> stages_for_command(const std::string& command) {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"entropy", {"entropy"}},
      {"stages cluster", {"stage_cluster"}},
      {"stages classify", {"stage_classify"}},
      {"fc build", {"fc_build"}},
      {"fc scan", {"fc_scan"}},
      {"fc export", {"fc_average", "fc_export"}},
      {"networks cluster", {"network_cluster"}},
      {"networks embed", {"network_embed"}},
      {"networks trends", {"network_metrics", "trends"}},
      {"run", stage_names()}};
  const auto it = table.find(command);
  if (it == table.end()) throw ConfigError("unknown command: " + command);
  return it->second;
}

namespace {

std::vector<std::string> upstream_of(const std::string& stage, const PipelineConfig& cfg) {
  if (stage == "ingest") return {};
  if (stage == "entropy" || stage == "fc_build") return {"ingest"};
  if (stage == "stage_cluster" || stage == "stage_classify") return {"entropy"};
  if (stage == "fc_scan" || stage == "fc_average" || stage == "network_cluster") return {"fc_build"};
  if (stage == "fc_export") return {"fc_average"};
  if (stage == "network_embed") return {"network_cluster"};
  if (stage == "network_metrics") {
    if (cfg.metrics_partition == "clusters") return {"fc_build", "network_cluster"};
    return {"fc_build"};
  }
  if (stage == "trends") return {"network_metrics"};
  throw ConfigError("unknown stage: " + stage);
}

std::string digits3(std::size_t i) {
  std::string s = std::to_string(i);
  if (s.size() < 3) s.insert(0, 3 - s.size(), '0');
  return s;
}

std::string file_hash(const fs::path& p) { return io::hex64(io::fnv1a(io::read_file(p))); }

void write_json(const fs::path& p, const json& doc) { io::write_file_atomic(p, doc.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  try {
    return json::parse(io::read_file(p));
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

/// Lines of a CSV split into cells, header excluded.
std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p, std::size_t width) {
  const std::string text = io::read_file(p);
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  bool header = true;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = io::trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    for (auto c : io::split(line, ',')) cells.emplace_back(io::trim(c));
    if (cells.size() != width) throw DataError(p.string() + ": expected " + std::to_string(width) + " columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}

// Everything a stage needs, plus the bookkeeping of what it wrote.
class Context {
 public:
  Context(const PipelineConfig& cfg, std::ostream* log) : cfg_(cfg), log_(log) {}

  const PipelineConfig& cfg() const { return cfg_; }
  fs::path out(const std::string& rel) const { return cfg_.out_dir / rel; }
  std::uint64_t seed(const std::string& stage) const {
    return derive_seed(cfg_.seed, io::fnv1a(stage));
  }

  void record(const std::string& rel) { outputs_.push_back(rel); }
  void write_text(const std::string& rel, std::string_view text) {
    fs::create_directories(out(rel).parent_path());
    io::write_file_atomic(out(rel), text);
    record(rel);
  }
  void write_doc(const std::string& rel, const json& doc) { write_text(rel, doc.dump(2) + "\n"); }
  void write_matrix(const std::string& rel, const Eigen::Ref<const Eigen::MatrixXd>& m) {
    write_text(rel, io::matrix_to_csv(m));
  }
  std::vector<std::string> take_outputs() { return std::exchange(outputs_, {}); }

  // Cohort and ROI table, loaded once per invocation.
  const Cohort& cohort() {
    if (!cohort_) {
      cohort_ = load_manifest(cfg_.manifest);
      assign_stages(*cohort_, cfg_.stage_bins);
    }
    return *cohort_;
  }
  const RoiTable& rois() {
    if (!rois_) rois_ = cfg_.roi_table.empty() ? sample_roi_table() : load_roi_table(cfg_.roi_table);
    return *rois_;
  }
  TimeSeriesMatrix series(std::size_t i) {
    return load_timeseries(cohort().subjects[i].source_path, static_cast<Eigen::Index>(rois().size()));
  }

  void log(const std::string& line) const {
    if (log_) *log_ << line << '\n' << std::flush;
  }

 private:
  const PipelineConfig& cfg_;
  std::ostream* log_;
  std::vector<std::string> outputs_;
  std::optional<Cohort> cohort_;
  std::optional<RoiTable> rois_;
};

// Non-finite SampEn (no matches, degenerate series) replaced by the column's
// median over finite entries; 0 when a column has none.
Eigen::MatrixXd impute_features(const std::vector<EntropyFeatureRow>& rows, bool append_age) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().sampen.size());
  Eigen::MatrixXd x(n, d + (append_age ? 1 : 0));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> finite;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = rows[static_cast<std::size_t>(i)].sampen[static_cast<std::size_t>(j)].value;
      if (std::isfinite(v)) finite.push_back(v);
    }
    const double fill = finite.empty() ? 0.0 : percentile(finite, 50.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = rows[static_cast<std::size_t>(i)].sampen[static_cast<std::size_t>(j)].value;
      x(i, j) = std::isfinite(v) ? v : fill;
    }
  }
  if (append_age)
    for (Eigen::Index i = 0; i < n; ++i) x(i, d) = rows[static_cast<std::size_t>(i)].age_years;
  return x;
}

std::vector<double> grid_of(const PipelineConfig& cfg) {
  return cfg.threshold_grid.empty() ? default_threshold_grid() : cfg.threshold_grid;
}

std::vector<int> clamp_range(const KRange& k, Eigen::Index n) {
  std::vector<int> out;
  for (int v : k.values())
    if (v <= n) out.push_back(v);
  if (out.size() < 3)
    throw DataError("k range " + std::to_string(k.k_min) + ".." + std::to_string(k.k_max) +
                    " leaves fewer than three values for " + std::to_string(n) + " items");
  return out;
}

json elbow_json(const ElbowResult& e) {
  return {{"k_range", e.k_range},
          {"distortion_scores", e.distortion_scores},
          {"within_between", e.within_between},
          {"chosen_k", e.chosen_k},
          {"method", e.method},
          {"degenerate", e.degenerate}};
}

std::vector<EntropyFeatureRow> load_features(Context& ctx) {
  return parse_feature_table(io::read_file(ctx.out("entropy/features.csv")));
}

Eigen::MatrixXd read_subject_matrix(Context& ctx, const std::string& id, const char* kind) {
  return io::read_matrix_csv(ctx.out("fc/subjects/" + id + "_" + kind + ".csv"));
}

// ---------------------------------------------------------------------------
// Stages. Each returns its summary document.

json stage_ingest(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  const RoiTable& rois = ctx.rois();
  if (cohort.subjects.size() < 3) throw DataError("manifest: at least three subjects are required");
  std::vector<Eigen::Index> timepoints(cohort.subjects.size());
  parallel_for(cohort.subjects.size(), ctx.cfg().workers, [&](std::size_t i) {
    timepoints[i] = ctx.series(i).n_timepoints();
  });
  std::string csv = "subject_id,age_years,stage_index,stage_label,out_of_range,timepoints\n";
  std::map<std::string, int> per_stage;
  int out_of_range = 0;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    csv += s.subject_id + ',' + io::format_double(s.age_years) + ',' + std::to_string(s.stage->index) +
           ',' + s.stage->label + ',' + (s.stage->out_of_range ? "1" : "0") + ',' +
           std::to_string(timepoints[i]) + '\n';
    ++per_stage[s.stage->label];
    out_of_range += s.stage->out_of_range ? 1 : 0;
  }
  ctx.write_text("ingest/cohort.csv", csv);
  fs::create_directories(ctx.out("ingest"));
  write_roi_table(ctx.out("ingest/rois.csv"), rois);
  ctx.record("ingest/rois.csv");
  json counts = json::object();
  for (const auto& b : ctx.cfg().stage_bins.bins()) counts[b.label] = per_stage[b.label];
  return {{"subjects", cohort.subjects.size()},
          {"rois", rois.size()},
          {"roi_table", ctx.cfg().roi_table.empty() ? "built-in sample" : "file"},
          {"subjects_per_stage", counts},
          {"ages_out_of_range", out_of_range}};
}

json stage_entropy(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  const EntropyParams params = ctx.cfg().entropy;
  std::vector<EntropyFeatureRow> rows(cohort.subjects.size());
  parallel_for(rows.size(), ctx.cfg().workers, [&](std::size_t i) {
    const auto& s = cohort.subjects[i];
    try {
      rows[i] = {s.subject_id, s.age_years, entropy_features(ctx.series(i), params)};
    } catch (const DataError& e) {
      throw DataError("subject " + s.subject_id + ": " + e.what());
    }
  });
  ctx.write_text("entropy/features.csv", feature_table_csv(rows));
  std::map<std::string, int> status_counts;
  for (const auto& r : rows)
    for (const auto& v : r.sampen) ++status_counts[std::string(to_string(v.status))];
  const json sidecar = {{"m", params.m},
                        {"tau", params.tau},
                        {"r", params.r.value},
                        {"r_mode", tolerance_mode(params.r)},
                        {"distance", "chebyshev"},
                        {"subjects", rows.size()},
                        {"rois", rows.empty() ? 0 : rows.front().sampen.size()},
                        {"status_counts", status_counts}};
  ctx.write_doc("entropy/features.json", sidecar);
  return sidecar;
}

json stage_cluster(Context& ctx) {
  const auto rows = load_features(ctx);
  const Eigen::MatrixXd x = standardize_columns(impute_features(rows, true));
  const auto& k = ctx.cfg().stage_clustering;
  const std::uint64_t seed = ctx.seed("stage_cluster");
  const ElbowResult e = elbow(x, clamp_range(k, x.rows()), seed, k.n_restarts, k.max_iter);
  const Partition p =
      kmeans(x, {e.chosen_k, derive_seed(seed, static_cast<std::uint64_t>(e.chosen_k)), k.max_iter, k.n_restarts});

  Eigen::VectorXi stage_labels(x.rows());
  std::string csv = "subject_id,age_years,stage_label,cluster_id\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const StageId st = assign_stage(rows[i].age_years, ctx.cfg().stage_bins);
    stage_labels(static_cast<Eigen::Index>(i)) = st.zero_based();
    csv += rows[i].subject_id + ',' + io::format_double(rows[i].age_years) + ',' + st.label + ',' +
           std::to_string(p.assignments(static_cast<Eigen::Index>(i))) + '\n';
  }
  json doc = elbow_json(e);
  doc["features"] = "sampen + age, median-imputed, standardized";
  doc["inertia_at_chosen_k"] = p.inertia;
  doc["ari_vs_age_stages"] = adjusted_rand_index(p.assignments, stage_labels);
  ctx.write_doc("stages/elbow.json", doc);
  ctx.write_text("stages/partition.csv", csv);
  return doc;
}

json stage_classify(Context& ctx) {
  const auto rows = load_features(ctx);
  LabeledDataset data;
  data.features = impute_features(rows, true);
  data.labels.resize(data.features.rows());
  for (std::size_t i = 0; i < rows.size(); ++i)
    data.labels(static_cast<Eigen::Index>(i)) = assign_stage(rows[i].age_years, ctx.cfg().stage_bins).zero_based();
  for (Eigen::Index j = 0; j + 1 < data.features.cols(); ++j) data.feature_names.push_back("sampen_" + digits3(static_cast<std::size_t>(j)));
  data.feature_names.emplace_back("age_years");

  const std::uint64_t seed = ctx.seed("stage_classify");
  auto [train, test] = stratified_split(data, ctx.cfg().test_fraction, derive_seed(seed, 0));

  // Standardize with training statistics only.
  const Eigen::RowVectorXd mean = train.features.colwise().mean();
  Eigen::RowVectorXd sd = ((train.features.rowwise() - mean).array().square().colwise().mean()).sqrt();
  sd = (sd.array() > 0.0).select(sd, 1.0);
  auto scale = [&](Eigen::MatrixXd& m) { m = ((m.rowwise() - mean).array().rowwise() / sd.array()).matrix(); };
  scale(train.features);
  scale(test.features);

  const int n_classes = static_cast<int>(ctx.cfg().stage_bins.size());
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (Eigen::Index i = 0; i < test.labels.size(); ++i) ++counts[static_cast<std::size_t>(test.labels(i))];
  const double majority = static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
                          static_cast<double>(test.size());

  json results = json::object();
  std::uint64_t index = 1;
  for (ClassifierKind kind : ctx.cfg().classifiers) {
    const std::string name(to_string(kind));
    const auto hp_it = ctx.cfg().hyperparams.find(name);
    const Hyperparams hp = hp_it == ctx.cfg().hyperparams.end() ? Hyperparams{} : hp_it->second;
    const ClassifierModel model = train_classifier(kind, train, hp, derive_seed(seed, index++), ctx.cfg().workers);
    ctx.write_doc("stages/models/" + name + ".json", model_to_json(model));
    results[name] = evaluation_to_json(evaluate(predict(model, test.features), test.labels, n_classes));
  }
  json scaling = {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                  {"sd", std::vector<double>(sd.data(), sd.data() + sd.size())},
                  {"feature_names", data.feature_names}};
  json labels = json::array();
  for (const auto& b : ctx.cfg().stage_bins.bins()) labels.push_back(b.label);
  const json doc = {{"test_fraction", ctx.cfg().test_fraction},
                    {"n_train", train.size()},
                    {"n_test", test.size()},
                    {"class_labels", labels},
                    {"test_class_counts", counts},
                    {"majority_baseline", majority},
                    {"classifiers", results}};
  ctx.write_doc("stages/evaluation.json", doc);
  ctx.write_doc("stages/feature_scaling.json", scaling);
  return doc;
}

json stage_fc_build(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  fs::create_directories(ctx.out("fc/subjects"));
  std::vector<std::vector<Eigen::Index>> constant(cohort.subjects.size());
  parallel_for(cohort.subjects.size(), ctx.cfg().workers, [&](std::size_t i) {
    const auto& id = cohort.subjects[i].subject_id;
    PearsonResult pr = pearson_matrix(ctx.series(i));
    constant[i] = pr.constant_columns;
    const ZMatrix z = fisher_z(pr.corr, ctx.cfg().clamp_epsilon);
    io::write_matrix_csv(ctx.out("fc/subjects/" + id + "_r.csv"), pr.corr.values);
    io::write_matrix_csv(ctx.out("fc/subjects/" + id + "_z.csv"), z.values);
  });
  json warnings = json::array();
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& id = cohort.subjects[i].subject_id;
    ctx.record("fc/subjects/" + id + "_r.csv");
    ctx.record("fc/subjects/" + id + "_z.csv");
    if (!constant[i].empty())
      warnings.push_back({{"subject_id", id}, {"constant_rois", constant[i]}});
  }
  return {{"subjects", cohort.subjects.size()},
          {"clamp_epsilon", ctx.cfg().clamp_epsilon},
          {"constant_column_warnings", warnings}};
}

json stage_fc_scan(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  const std::vector<double> grid = grid_of(ctx.cfg());
  std::vector<ThresholdCurve> curves(cohort.subjects.size());
  parallel_for(cohort.subjects.size(), ctx.cfg().workers, [&](std::size_t i) {
    curves[i] = threshold_scan(CorrMatrix{read_subject_matrix(ctx, cohort.subjects[i].subject_id, "r")}, grid);
  });
  const auto& bins = ctx.cfg().stage_bins.bins();
  std::string per_subject = "subject_id";
  std::string curve = "threshold,all";
  for (double t : grid) per_subject += ",t_" + io::format_double(t);
  for (const auto& b : bins) curve += "," + b.label;
  per_subject += '\n';
  curve += '\n';
  for (std::size_t i = 0; i < curves.size(); ++i) {
    per_subject += cohort.subjects[i].subject_id;
    for (long c : curves[i].edge_counts) per_subject += ',' + std::to_string(c);
    per_subject += '\n';
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double all = 0.0;
    std::vector<double> sum(bins.size(), 0.0);
    std::vector<int> n(bins.size(), 0);
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const double c = static_cast<double>(curves[i].edge_counts[g]);
      all += c;
      const auto s = static_cast<std::size_t>(cohort.subjects[i].stage->zero_based());
      sum[s] += c;
      ++n[s];
    }
    curve += io::format_double(grid[g]) + ',' + io::format_double(all / static_cast<double>(curves.size()));
    for (std::size_t s = 0; s < bins.size(); ++s)
      curve += ',' + (n[s] ? io::format_double(sum[s] / n[s]) : std::string("nan"));
    curve += '\n';
  }
  ctx.write_text("fc/threshold_curve.csv", curve);
  ctx.write_text("fc/threshold_per_subject.csv", per_subject);
  return {{"grid", grid}, {"subjects", curves.size()}, {"threshold_used_downstream", ctx.cfg().threshold}};
}

json stage_fc_average(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  const double t = ctx.cfg().threshold;
  std::vector<Eigen::MatrixXd> bins(cohort.subjects.size());
  parallel_for(cohort.subjects.size(), ctx.cfg().workers, [&](std::size_t i) {
    bins[i] = binarize(CorrMatrix{read_subject_matrix(ctx, cohort.subjects[i].subject_id, "r")}, t).values;
  });
  json stages = json::array();
  std::vector<std::pair<double, std::string>> order;
  for (const auto& b : ctx.cfg().stage_bins.bins()) {
    std::vector<Eigen::MatrixXd> members;
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (cohort.subjects[i].stage->index == b.index) members.push_back(bins[i]);
    if (members.empty()) {
      stages.push_back({{"label", b.label}, {"n_subjects", 0}});
      continue;
    }
    const Eigen::MatrixXd prevalence = group_average(members);
    const auto r = prevalence.rows();
    const double mean = prevalence.sum() / static_cast<double>(r * (r - 1));  // zero diagonal
    ctx.write_matrix("fc/prevalence_" + b.label + ".csv", prevalence);
    stages.push_back({{"label", b.label}, {"n_subjects", members.size()}, {"mean_edge_prevalence", mean}});
    order.emplace_back(mean, b.label);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  json ordering = json::array();
  for (const auto& [m, label] : order) ordering.push_back(label);
  const json doc = {{"threshold", t},
                    {"binarization", "abs(r) >= threshold"},
                    {"clamp_epsilon", ctx.cfg().clamp_epsilon},
                    {"stages", stages},
                    {"order_by_mean_prevalence", ordering}};
  ctx.write_doc("fc/group_summary.json", doc);
  return doc;
}

json stage_fc_export(Context& ctx) {
  const RoiTable& rois = ctx.rois();
  const double cutoff = ctx.cfg().edge_cutoff;
  json files = json::array();
  bool exact = true;
  fs::create_directories(ctx.out("brainnet"));
  for (const auto& b : ctx.cfg().stage_bins.bins()) {
    const fs::path src = ctx.out("fc/prevalence_" + b.label + ".csv");
    if (!fs::exists(src)) continue;
    const Eigen::MatrixXd prevalence = io::read_matrix_csv(src);
    const std::string node = "brainnet/" + b.label + ".node";
    const std::string edge = "brainnet/" + b.label + ".edge";
    export_brainnet(prevalence, rois, ctx.out(node), ctx.out(edge), cutoff);
    ctx.record(node);
    ctx.record(edge);
    exact = exact && read_edge_file(ctx.out(edge)) == apply_edge_cutoff(prevalence, cutoff);
    files.push_back({{"label", b.label}, {"node", node}, {"edge", edge}});
  }
  if (!exact) throw StageError("edge file did not parse back to the exported matrix");
  return {{"edge_cutoff", cutoff}, {"files", files}, {"edge_roundtrip_exact", exact}};
}

Eigen::MatrixXd group_z(Context& ctx, const std::vector<std::size_t>& members) {
  std::vector<Eigen::MatrixXd> zs(members.size());
  parallel_for(members.size(), ctx.cfg().workers, [&](std::size_t i) {
    zs[i] = read_subject_matrix(ctx, ctx.cohort().subjects[members[i]].subject_id, "z");
  });
  return group_average(zs);
}

Eigen::VectorXi read_partition(Context& ctx) {
  const auto rows = read_csv_rows(ctx.out("networks/partition.csv"), 3);
  Eigen::VectorXi a(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) a(static_cast<Eigen::Index>(i)) = std::stoi(rows[i][2]);
  return a;
}

json stage_network_cluster(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  std::vector<std::size_t> all(cohort.subjects.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Eigen::MatrixXd gz = group_z(ctx, all);
  ctx.write_matrix("networks/group_z.csv", gz);

  const auto& k = ctx.cfg().network_clustering;
  const std::uint64_t seed = ctx.seed("network_cluster");
  const ElbowResult e = elbow(gz, clamp_range(k, gz.rows()), seed, k.n_restarts, k.max_iter);
  const Partition p =
      kmeans(gz, {e.chosen_k, derive_seed(seed, static_cast<std::uint64_t>(e.chosen_k)), k.max_iter, k.n_restarts});

  const RoiTable& rois = ctx.rois();
  const Eigen::VectorXi networks = rois.network_assignments();
  std::string csv = "roi_index,network,cluster_id\n";
  for (Eigen::Index i = 0; i < gz.rows(); ++i)
    csv += std::to_string(i) + ',' + std::string(to_string(rois[static_cast<std::size_t>(i)].network)) +
           ',' + std::to_string(p.assignments(i)) + '\n';
  ctx.write_text("networks/partition.csv", csv);

  const Reordered r = reorder_by_partition(gz, p.assignments);
  ctx.write_matrix("networks/group_z_reordered.csv", r.matrix);
  std::string ordering = "position,roi_index,cluster_id\n";
  for (std::size_t i = 0; i < r.ordering.size(); ++i)
    ordering += std::to_string(i) + ',' + std::to_string(r.ordering[i]) + ',' +
                std::to_string(p.assignments(r.ordering[i])) + '\n';
  ctx.write_text("networks/ordering.csv", ordering);

  // Per-stage group matrices under the same ordering.
  for (const auto& b : ctx.cfg().stage_bins.bins()) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
      if (cohort.subjects[i].stage->index == b.index) members.push_back(i);
    if (members.empty()) continue;
    ctx.write_matrix("networks/group_z_reordered_" + b.label + ".csv",
                     reorder_by_partition(group_z(ctx, members), p.assignments).matrix);
  }

  json doc = elbow_json(e);
  doc["features"] = "rows of the group Fisher-z matrix";
  doc["inertia_at_chosen_k"] = p.inertia;
  doc["ari_vs_roi_table_networks"] = adjusted_rand_index(p.assignments, networks);
  ctx.write_doc("networks/elbow.json", doc);
  return doc;
}

json stage_network_embed(Context& ctx) {
  const Eigen::MatrixXd gz = io::read_matrix_csv(ctx.out("networks/group_z.csv"));
  const Eigen::VectorXi clusters = read_partition(ctx);
  TsneParams params = ctx.cfg().tsne;
  params.seed = ctx.seed("network_embed");
  const double cap = (static_cast<double>(gz.rows()) - 1.0) / 3.0;
  if (params.perplexity >= cap) params.perplexity = std::max(1.0, std::floor(cap - 1.0));
  const TsneResult res = tsne(gz, params);

  std::string csv = "item_index,dim1,dim2,cluster_id\n";
  for (Eigen::Index i = 0; i < gz.rows(); ++i)
    csv += std::to_string(i) + ',' + io::format_double(res.embedding(i, 0)) + ',' +
           io::format_double(res.embedding(i, 1)) + ',' + std::to_string(clusters(i)) + '\n';
  ctx.write_text("networks/embedding.csv", csv);

  const int k = std::min(ctx.cfg().embed_neighbors, static_cast<int>((gz.rows() - 1) / 2));
  json checkpoints = json::array();
  for (const auto& [it, kl] : res.kl_checkpoints) checkpoints.push_back({{"iteration", it}, {"kl", kl}});
  const json doc = {{"perplexity_used", params.perplexity},
                    {"initial_dims", params.initial_dims},
                    {"max_iter", params.max_iter},
                    {"learning_rate", params.learning_rate},
                    {"kl_checkpoints", checkpoints},
                    {"final_kl", res.final_kl},
                    {"neighbors", k},
                    {"trustworthiness", trustworthiness(gz, res.embedding, k)},
                    {"cluster_label_accuracy", neighbor_label_accuracy(res.embedding, clusters, k)},
                    {"network_label_accuracy",
                     neighbor_label_accuracy(res.embedding, ctx.rois().network_assignments(), k)}};
  ctx.write_doc("networks/embedding.json", doc);
  return doc;
}

NetworkMap metrics_partition(Context& ctx) {
  const RoiTable& rois = ctx.rois();
  NetworkMap map;
  map.assignments = rois.network_assignments();
  for (auto label : kNetworkLabels) map.labels.emplace_back(label);
  if (ctx.cfg().metrics_partition == "roi_table") return map;

  const Eigen::VectorXi clusters = read_partition(ctx);
  const int k = clusters.maxCoeff() + 1;
  if (k == static_cast<int>(kNetworkCount)) {
    map.assignments = match_labels(clusters, map.assignments, k);
    return map;
  }
  map.assignments = clusters;
  map.labels.clear();
  for (int c = 0; c < k; ++c) map.labels.push_back("C" + std::to_string(c));
  return map;
}

json stage_network_metrics(Context& ctx) {
  const Cohort& cohort = ctx.cohort();
  NetworkMap map = metrics_partition(ctx);
  // Drop labels with no ROI so every reported network is measurable.
  std::vector<int> keep;
  for (int c = 0; c < map.network_count(); ++c)
    if (map.size_of(c) >= 2) keep.push_back(c);
  std::vector<std::vector<NetworkConnectivityStats>> per(cohort.subjects.size());
  parallel_for(cohort.subjects.size(), ctx.cfg().workers, [&](std::size_t i) {
    const auto& s = cohort.subjects[i];
    const Eigen::MatrixXd z = read_subject_matrix(ctx, s.subject_id, "z");
    for (int c : keep) {
      NetworkConnectivityStats st;
      st.subject_id = s.subject_id;
      st.age_years = s.age_years;
      st.network = map.labels[static_cast<std::size_t>(c)];
      st.wnc = within_connectivity(z, map, c);
      st.bnc = between_connectivity(z, map, c);
      st.ns = segregation(st.wnc, st.bnc);
      per[i].push_back(st);
    }
  });
  std::vector<NetworkConnectivityStats> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  ctx.write_text("metrics/subject_stats.csv", subject_stats_csv(all));
  json nets = json::array();
  for (int c : keep) nets.push_back({{"network", map.labels[static_cast<std::size_t>(c)]}, {"rois", map.size_of(c)}});
  return {{"partition", ctx.cfg().metrics_partition}, {"networks", nets}, {"rows", all.size()}};
}

std::vector<NetworkConnectivityStats> read_subject_stats(const fs::path& p) {
  std::vector<NetworkConnectivityStats> out;
  for (const auto& row : read_csv_rows(p, 7)) {
    NetworkConnectivityStats s;
    s.subject_id = row[0];
    s.age_years = io::parse_double(row[1]);
    s.network = row[2];
    s.wnc = io::parse_double(row[3]);
    s.bnc = io::parse_double(row[4]);
    s.ns = row[6] == "1" ? Segregation{io::parse_double(row[5]), true} : Segregation{0.0, false};
    out.push_back(s);
  }
  return out;
}

json stage_trends(Context& ctx) {
  const auto stats = read_subject_stats(ctx.out("metrics/subject_stats.csv"));
  const TrendTable table = cohort_trends(stats, ctx.cfg().outlier_lo_pct, ctx.cfg().outlier_hi_pct);
  ctx.write_text("trends/trends.csv", trend_table_csv(table));
  for (const auto& t : table.trends) {
    std::string csv = "age_years,value,fit\n";
    for (const auto& p : t.used)
      csv += io::format_double(p.x) + ',' + io::format_double(p.y) + ',' +
             io::format_double(t.fit.intercept + t.fit.slope * p.x) + '\n';
    ctx.write_text("trends/scatter_" + t.network + "_" + std::string(to_string(t.measure)) + ".csv", csv);
  }
  json trends = json::array();
  for (const auto& t : table.trends)
    trends.push_back({{"network", t.network},
                      {"measure", std::string(to_string(t.measure))},
                      {"slope", t.fit.slope},
                      {"intercept", t.fit.intercept},
                      {"r_squared", t.fit.r_squared},
                      {"degenerate", t.fit.degenerate},
                      {"n_input", t.n_input},
                      {"n_used", t.n_used},
                      {"n_undefined", t.n_undefined}});
  json doc = {{"lo_pct", ctx.cfg().outlier_lo_pct},
              {"hi_pct", ctx.cfg().outlier_hi_pct},
              {"measure_space", "fisher_z"},
              {"trends", trends},
              {"skipped", table.skipped}};

  if (!ctx.cfg().ground_truth.empty()) {
    const json gt = read_json(ctx.cfg().ground_truth);
    std::string csv = "network,measure,planted_slope,recovered_slope,relative_error,sign_match\n";
    json rows = json::array();
    for (const json& g : gt.at("trends")) {
      const std::string net = g.at("network").get<std::string>();
      const std::string measure = g.at("measure").get<std::string>();
      const double planted = g.at("slope").get<double>();
      for (const auto& t : table.trends) {
        if (t.network != net || to_string(t.measure) != measure) continue;
        const double rel = planted != 0.0 ? std::abs(t.fit.slope - planted) / std::abs(planted)
                                          : std::numeric_limits<double>::infinity();
        const bool sign = (planted > 0.0) == (t.fit.slope > 0.0);
        csv += net + ',' + measure + ',' + io::format_double(planted) + ',' +
               io::format_double(t.fit.slope) + ',' + io::format_double(rel) + ',' +
               (sign ? "1" : "0") + '\n';
        rows.push_back({{"network", net}, {"measure", measure}, {"planted_slope", planted},
                        {"recovered_slope", t.fit.slope}, {"relative_error", rel}, {"sign_match", sign}});
      }
    }
    ctx.write_text("trends/ground_truth_comparison.csv", csv);
    doc["ground_truth_comparison"] = rows;
  }
  ctx.write_doc("trends/summary.json", doc);
  return doc;
}

using StageFn = json (*)(Context&);

StageFn stage_fn(const std::string& name) {
  static const std::map<std::string, StageFn> fns = {
      {"ingest", stage_ingest},
      {"entropy", stage_entropy},
      {"stage_cluster", stage_cluster},
      {"stage_classify", stage_classify},
      {"fc_build", stage_fc_build},
      {"fc_scan", stage_fc_scan},
      {"fc_average", stage_fc_average},
      {"fc_export", stage_fc_export},
      {"network_cluster", stage_network_cluster},
      {"network_embed", stage_network_embed},
      {"network_metrics", stage_network_metrics},
      {"trends", stage_trends}};
  return fns.at(name);
}

// Parameters that influence a stage's outputs; paths and worker counts are
// deliberately absent.
json stage_params(const std::string& name, const PipelineConfig& cfg, Context& ctx) {
  const json c = cfg.to_json();
  if (name == "ingest") {
    json files = json::array();
    for (const auto& s : ctx.cohort().subjects) files.push_back(file_hash(s.source_path));
    return {{"manifest", file_hash(cfg.manifest)},
            {"roi_table", cfg.roi_table.empty() ? std::string("sample") : file_hash(cfg.roi_table)},
            {"series", files},
            {"stage_bins", c.at("stage_bins")}};
  }
  if (name == "entropy") return c.at("entropy");
  if (name == "stage_cluster") return {{"k", c.at("stage_clustering")}, {"seed", cfg.seed}};
  if (name == "stage_classify") return {{"c", c.at("classification")}, {"seed", cfg.seed}};
  if (name == "fc_build") return {{"eps", cfg.clamp_epsilon}};
  if (name == "fc_scan") return {{"grid", grid_of(cfg)}, {"t", cfg.threshold}};
  if (name == "fc_average") return {{"t", cfg.threshold}};
  if (name == "fc_export") return {{"cutoff", cfg.edge_cutoff}};
  if (name == "network_cluster") return {{"k", c.at("network_clustering")}, {"seed", cfg.seed}};
  if (name == "network_embed") return {{"tsne", c.at("tsne")}, {"seed", cfg.seed}};
  if (name == "network_metrics") return {{"partition", cfg.metrics_partition}};
  if (name == "trends")
    return {{"lo", cfg.outlier_lo_pct},
            {"hi", cfg.outlier_hi_pct},
            {"gt", cfg.ground_truth.empty() ? std::string() : file_hash(cfg.ground_truth)}};
  throw ConfigError("unknown stage: " + name);
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& cfg, const std::vector<std::string>& targets,
                       std::ostream* log) {
  cfg.validate();
  Context ctx(cfg, log);

  // Close over upstream stages, then keep execution order.
  std::set<std::string> needed;
  std::function<void(const std::string&)> need = [&](const std::string& s) {
    if (!needed.insert(s).second) return;
    for (const auto& u : upstream_of(s, cfg)) need(u);
  };
  for (const auto& t : targets) need(t);

  fs::create_directories(cfg.out_dir / ".state");
  fs::create_directories(cfg.out_dir / "summary");
  std::map<std::string, std::string> keys;
  std::set<std::string> ran;
  RunResult result;

  for (const auto& name : stage_names()) {
    if (!needed.count(name)) continue;
    const fs::path state_path = cfg.out_dir / ".state" / (name + ".json");
    const std::string summary_rel = "summary/" + name + ".json";
    try {
      json key_doc = {{"stage", name}, {"params", stage_params(name, cfg, ctx)}};
      bool upstream_ran = false;
      for (const auto& u : upstream_of(name, cfg)) {
        key_doc["upstream"][u] = keys.at(u);
        upstream_ran = upstream_ran || ran.count(u);
      }
      const std::string key = io::hex64(io::fnv1a(key_doc.dump()));
      keys[name] = key;

      bool fresh = false;
      if (!upstream_ran && fs::exists(state_path)) {
        const json state = read_json(state_path);
        fresh = state.value("key", "") == key;
        for (const auto& rel : state.value("outputs", std::vector<std::string>{}))
          fresh = fresh && fs::exists(cfg.out_dir / rel);
      }
      if (fresh) {
        ctx.log("[" + name + "] skipped (inputs unchanged)");
        result.stages.push_back({name, true});
        continue;
      }

      fs::remove(state_path);
      const auto t0 = std::chrono::steady_clock::now();
      const json summary = stage_fn(name)(ctx);
      ctx.write_doc(summary_rel, summary);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_json(state_path, {{"stage", name}, {"key", key}, {"outputs", ctx.take_outputs()}});
      ran.insert(name);
      result.stages.push_back({name, false});
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", secs);
      ctx.log("[" + name + "] done in " + buf + " s");
    } catch (const ConfigError& e) {
      throw ConfigError("stage " + name + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw StageError("stage " + name + ": " + e.what());
    }
  }
  return result;
}

json write_report(const fs::path& out_dir) {
  json stages = json::array();
  for (const auto& name : stage_names()) {
    const fs::path p = out_dir / "summary" / (name + ".json");
    if (!fs::exists(p)) continue;
    stages.push_back({{"stage", name}, {"summary", read_json(p)}});
  }
  if (stages.empty()) throw DataError(out_dir.string() + ": no stage summaries found");
  const json doc = {{"format", "rsfc-report"}, {"version", 1}, {"stages", stages}};
  write_json(out_dir / "report.json", doc);
  return doc;
}

}  // namespace rsfc::pipeline
