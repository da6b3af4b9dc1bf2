/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Subcommand implementations shared by the command-line tool and the tests.
// Functions throw InputError (exit 2) or InvariantError (exit 3); the
// caller maps exceptions to exit codes.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungsev/error.hpp"
#include "lungsev/phantom.hpp"
#include "lungsev/random.hpp"
#include "lungsev/severity.hpp"
#include "lungsev/stats.hpp"
#include "lungsev/toynet/checkpoint.hpp"
#include "lungsev/toynet/net.hpp"
#include "lungsev/toynet/train.hpp"
#include "lungsev/volgrid.hpp"

namespace lungsev::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitInternal = 3 };

/// Maps the active exception to an exit code and a one-line diagnostic.
inline int exit_code_for(const std::exception_ptr& ep, std::string& message) {
  try {
    std::rethrow_exception(ep);
  } catch (const InputError& e) {
    message = e.what();
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    message = e.what();
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    message = std::string("malformed JSON: ") + e.what();
    return kExitInput;
  } catch (const std::exception& e) {
    message = e.what();
    return kExitInternal;
  } catch (...) {
    message = "unknown internal error";
    return kExitInternal;
  }
}

// Plumbing ------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on `workers` threads. Rethrows the exception of
/// the lowest failing index once all workers finish.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers < 1) throw InputError("--workers must be >= 1");
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < failed_at) {
            failed_at = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw InputError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json(const ojson& j, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw InputError("cannot write " + p.string());
  f << j.dump(2) << "\n";
}

inline Dims parse_dims(const std::string& s) {
  std::array<std::int64_t, 3> v{};
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !is.eof() || v[0] < 1 || v[1] < 1 ||
      v[2] < 1) {
    throw InputError("expected Z,Y,X positive integers, got '" + s + "'");
  }
  return {v[0], v[1], v[2]};
}

inline Spacing parse_spacing(const std::string& s) {
  std::array<double, 3> v{};
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !is.eof()) {
    throw InputError("expected Z,Y,X spacing in mm, got '" + s + "'");
  }
  for (double d : v) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InputError("spacing must be positive and finite, got '" + s + "'");
  }
  return {v[0], v[1], v[2]};
}

// Case directory layout -------------------------------------------------------------

inline constexpr const char* kVolumeName = "volume";
inline constexpr const char* kLobesName = "lobes";
inline constexpr const char* kAbnormGtName = "abnorm_gt";
inline constexpr const char* kAbnormPredName = "abnorm_pred";
inline constexpr const char* kOracleName = "oracle.json";
inline constexpr const char* kReportName = "report.json";

/// Sorted subdirectories of `dir` holding a `volume.json`.
inline std::vector<fs::path> case_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / (std::string(kVolumeName) + ".json"))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// quantify --------------------------------------------------------------------------

struct QuantifyInputs {
  fs::path volume;
  fs::path lobes;
  fs::path abnormal;
};

/// Read -> report, with the wall-clock of the whole case recorded.
inline ojson quantify_case(const std::string& case_id, const QuantifyInputs& in, double threshold_hu) {
  if (!std::isfinite(threshold_hu)) throw InputError("--threshold-hu must be finite");
  const auto t0 = std::chrono::steady_clock::now();
  const Volume v = read_volume(in.volume);
  const LabelMask lobes = read_mask(in.lobes);
  const LabelMask abn = read_mask(in.abnormal);
  const severity::SeverityReport r = severity::compute_report(v, lobes, abn, threshold_hu);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ojson j;
  j["case_id"] = case_id;
  const nlohmann::json body = r;
  for (const auto& [k, val] : body.items()) j[k] = val;
  j["dims"] = {v.dims().z, v.dims().y, v.dims().x};
  j["spacing_mm"] = {v.spacing().z, v.spacing().y, v.spacing().x};
  j["elapsed_seconds"] = elapsed;
  return j;
}

/// Single case: writes <out_dir>/report.json.
inline ojson run_quantify(const QuantifyInputs& in, const fs::path& out_dir, double threshold_hu) {
  std::string id = in.volume.parent_path().filename().string();
  if (id.empty()) id = in.volume.stem().string();
  ojson j = quantify_case(id, in, threshold_hu);
  write_json(j, out_dir / kReportName);
  return j;
}

/// Every case directory under `cases_dir`, using mask `<abnormal_name>`:
/// writes <out_dir>/<case_id>.json. Returns the case ids in sorted order.
inline std::vector<std::string> run_quantify_cases(const fs::path& cases_dir, const std::string& abnormal_name,
                                                   const fs::path& out_dir, double threshold_hu, int workers) {
  const auto dirs = case_dirs(cases_dir);
  if (dirs.empty()) throw InputError("no case directories under " + cases_dir.string());
  fs::create_directories(out_dir);
  std::vector<std::string> ids(dirs.size());
  parallel_for(dirs.size(), workers, [&](std::size_t i) {
    ids[i] = dirs[i].filename().string();
    const QuantifyInputs in{dirs[i] / (std::string(kVolumeName) + ".json"),
                            dirs[i] / (std::string(kLobesName) + ".json"), dirs[i] / (abnormal_name + ".json")};
    write_json(quantify_case(ids[i], in, threshold_hu), out_dir / (ids[i] + ".json"));
  });
  return ids;
}

// evaluate --------------------------------------------------------------------------

inline constexpr std::array<const char*, 4> kMetricNames{"po", "pho", "lss", "lhos"};
inline constexpr int kMaxLobeScoreSum = 4 * kNumLobes;

inline double metric_value(const severity::SeverityReport& r, std::size_t m) {
  switch (m) {
    case 0: return r.po;
    case 1: return r.pho;
    case 2: return r.lss;
    case 3: return r.lhos;
    default: throw InvariantError("metric index out of range");
  }
}

/// Full-scale range of a metric, used for jitter amplitude.
inline double metric_range(std::size_t m) { return m < 2 ? 100.0 : static_cast<double>(kMaxLobeScoreSum); }

inline stats::BinEdges metric_bins(std::size_t m) {
  return m < 2 ? stats::BinEdges::clinical_percent() : stats::BinEdges::integer_scores(kMaxLobeScoreSum);
}

struct CaseRow {
  std::string id;
  bool positive = true;
  severity::SeverityReport gt;
  severity::SeverityReport pred;
};

struct MetricSummary {
  std::string name;
  stats::ContingencyResult chi2;
  std::optional<stats::Correlation> pearson;
  std::optional<stats::Correlation> kendall;
  std::optional<stats::RegressionFit> fit;
};

struct EvaluationSummary {
  std::size_t n_cases = 0;
  std::size_t n_positive = 0;
  std::vector<MetricSummary> metrics;
  std::map<std::string, std::string> undefined;  // "<metric>.<statistic>" -> reason
  std::vector<CaseRow> cases;                    // sorted by id
};

inline constexpr std::size_t kMinEvaluationCases = 3;

/// Chi-squared over all cases; correlations and model fit over positive cases.
inline EvaluationSummary evaluate_rows(std::vector<CaseRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const CaseRow& a, const CaseRow& b) { return a.id < b.id; });
  if (rows.size() < kMinEvaluationCases) {
    throw InputError("evaluate needs at least " + std::to_string(kMinEvaluationCases) + " cases, got " +
                     std::to_string(rows.size()));
  }
  EvaluationSummary s;
  s.n_cases = rows.size();
  for (const auto& r : rows) s.n_positive += r.positive ? 1 : 0;
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    MetricSummary ms;
    ms.name = kMetricNames[m];
    std::vector<double> gt_all, pred_all, gt_pos, pred_pos;
    for (const auto& r : rows) {
      gt_all.push_back(metric_value(r.gt, m));
      pred_all.push_back(metric_value(r.pred, m));
      if (r.positive) {
        gt_pos.push_back(gt_all.back());
        pred_pos.push_back(pred_all.back());
      }
    }
    const auto bins = metric_bins(m);
    ms.chi2 = stats::chi2_contingency(stats::bin_counts(gt_all, bins), stats::bin_counts(pred_all, bins));
    const stats::PairedSeries pos(gt_pos, pred_pos);
    auto attempt = [&](const char* stat, auto&& f) {
      try {
        f();
      } catch (const UndefinedStatistic& e) {
        s.undefined[ms.name + "." + stat] = e.what();
      }
    };
    attempt("pearson", [&] { ms.pearson = stats::pearson(pos); });
    attempt("kendall", [&] { ms.kendall = stats::kendall_tau(pos); });
    attempt("fit", [&] { ms.fit = stats::linfit(pos); });
    s.metrics.push_back(std::move(ms));
  }
  s.cases = std::move(rows);
  return s;
}

inline ojson to_json(const EvaluationSummary& s) {
  ojson j;
  j["n_cases"] = s.n_cases;
  j["n_positive"] = s.n_positive;
  ojson metrics = ojson::object();
  for (const auto& m : s.metrics) {
    ojson o;
    o["chi2"] = m.chi2.chi2;
    o["chi2_dof"] = m.chi2.dof;
    o["chi2_p"] = m.chi2.p_value;
    o["pearson_r"] = m.pearson ? ojson(m.pearson->value) : ojson(nullptr);
    o["pearson_p"] = m.pearson ? ojson(m.pearson->p_value) : ojson(nullptr);
    o["kendall_tau"] = m.kendall ? ojson(m.kendall->value) : ojson(nullptr);
    o["kendall_p"] = m.kendall ? ojson(m.kendall->p_value) : ojson(nullptr);
    if (m.fit) {
      const auto& f = *m.fit;
      o["beta0"] = f.beta0;
      o["beta0_ci"] = {f.beta0_ci.lo, f.beta0_ci.hi};
      o["beta1"] = f.beta1;
      o["beta1_ci"] = {f.beta1_ci.lo, f.beta1_ci.hi};
      o["r2"] = f.r2;
      o["mean_abs_error"] = f.mean_abs_error;
      o["rmse_about_fit"] = f.rmse_about_fit;
    } else {
      for (const char* k : {"beta0", "beta0_ci", "beta1", "beta1_ci", "r2", "mean_abs_error", "rmse_about_fit"}) {
        o[k] = nullptr;
      }
    }
    metrics[m.name] = std::move(o);
  }
  j["metrics"] = std::move(metrics);
  j["undefined"] = s.undefined;
  ojson cases = ojson::array();
  for (const auto& r : s.cases) {
    ojson c;
    c["case_id"] = r.id;
    c["positive"] = r.positive;
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      c[std::string(kMetricNames[m]) + "_gt"] = metric_value(r.gt, m);
      c[std::string(kMetricNames[m]) + "_pred"] = metric_value(r.pred, m);
    }
    cases.push_back(std::move(c));
  }
  j["cases"] = std::move(cases);
  return j;
}

/// Report files keyed by case id: `<dir>/<id>.json`, or `<dir>/<id>/report.json`
/// or `<dir>/<id>/oracle.json`.
inline std::map<std::string, fs::path> collect_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  auto add = [&](const std::string& id, const fs::path& p) {
    if (!out.emplace(id, p).second) throw InputError("duplicate case id '" + id + "' in " + dir.string());
  };
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      add(e.path().stem().string(), e.path());
    } else if (e.is_directory()) {
      if (fs::exists(e.path() / kReportName)) {
        add(e.path().filename().string(), e.path() / kReportName);
      } else if (fs::exists(e.path() / kOracleName)) {
        add(e.path().filename().string(), e.path() / kOracleName);
      }
    }
  }
  return out;
}

struct CasePair {
  std::string id;
  fs::path pred;
  fs::path gt;
};

/// Pairs by case id; any id present on one side only is an error.
inline std::vector<CasePair> pair_reports(const fs::path& pred_dir, const fs::path& gt_dir) {
  const auto pred = collect_reports(pred_dir);
  const auto gt = collect_reports(gt_dir);
  std::vector<std::string> missing;
  for (const auto& [id, p] : pred)
    if (!gt.contains(id)) missing.push_back(id + " (no ground truth)");
  for (const auto& [id, p] : gt)
    if (!pred.contains(id)) missing.push_back(id + " (no prediction)");
  if (!missing.empty()) {
    std::string msg = "case id mismatch between " + pred_dir.string() + " and " + gt_dir.string() + ":";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw InputError(msg);
  }
  std::vector<CasePair> out;
  for (const auto& [id, p] : pred) out.push_back({id, p, gt.at(id)});
  return out;
}

/// CSV of `case_id,pred,gt`; relative paths resolve against the manifest's
/// directory. A header line starting with `case_id` is skipped.
inline std::vector<CasePair> read_manifest(const fs::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw InputError("cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<CasePair> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("case_id", 0) == 0 || line[0] == '#') continue;
    std::istringstream is(line);
    std::string id, pred, gt;
    if (!std::getline(is, id, ',') || !std::getline(is, pred, ',') || !std::getline(is, gt) || id.empty()) {
      throw InputError("manifest line " + std::to_string(lineno) + ": expected case_id,pred,gt");
    }
    if (!seen.insert(id).second) throw InputError("manifest repeats case id '" + id + "'");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    out.push_back({id, resolve(pred), resolve(gt)});
  }
  std::sort(out.begin(), out.end(), [](const CasePair& a, const CasePair& b) { return a.id < b.id; });
  return out;
}

/// One case id per line; blank lines and `#` comments ignored.
inline std::set<std::string> read_id_list(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw InputError("cannot open " + p.string());
  std::set<std::string> ids;
  std::string line;
  while (std::getline(f, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(b, e - b + 1));
  }
  return ids;
}

inline severity::SeverityReport read_report(const fs::path& p) {
  const auto j = read_json(p);
  try {
    return j.get<severity::SeverityReport>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad severity report " + p.string() + ": " + e.what());
  }
}

struct EvaluateOptions {
  fs::path pred_dir;
  fs::path gt_dir;
  fs::path out_dir;
  std::optional<fs::path> manifest;
  std::optional<fs::path> positive_list;
  double jitter_pct = 0.2;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Scatter rows in case order then metric order; jitter is uniform in
/// +-(jitter_pct/100 * metric range) and only touches the *_jittered columns.
inline void write_scatter_csv(const EvaluationSummary& s, double jitter_pct, std::uint64_t seed, const fs::path& p) {
  if (!(jitter_pct >= 0.0) || !std::isfinite(jitter_pct)) throw InputError("--jitter-pct must be >= 0");
  std::ofstream f(p);
  if (!f) throw InputError("cannot write " + p.string());
  auto e = rng::make_engine(seed);
  f << "case_id,metric,gt,pred,gt_jittered,pred_jittered\n" << std::setprecision(17);
  for (const auto& r : s.cases) {
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      const double a = jitter_pct / 100.0 * metric_range(m);
      const double g = metric_value(r.gt, m);
      const double pr = metric_value(r.pred, m);
      const double gj = g + rng::uniform(e, -a, a);
      const double pj = pr + rng::uniform(e, -a, a);
      f << r.id << "," << kMetricNames[m] << "," << g << "," << pr << "," << gj << "," << pj << "\n";
    }
  }
}

inline EvaluationSummary run_evaluate(const EvaluateOptions& o) {
  if (!(o.jitter_pct >= 0.0) || !std::isfinite(o.jitter_pct)) throw InputError("--jitter-pct must be >= 0");
  const auto pairs = o.manifest ? read_manifest(*o.manifest) : pair_reports(o.pred_dir, o.gt_dir);
  std::vector<CaseRow> rows(pairs.size());
  parallel_for(pairs.size(), o.workers, [&](std::size_t i) {
    rows[i] = {pairs[i].id, true, read_report(pairs[i].gt), read_report(pairs[i].pred)};
  });
  if (o.positive_list) {
    const auto pos = read_id_list(*o.positive_list);
    std::set<std::string> known;
    for (const auto& r : rows) known.insert(r.id);
    for (const auto& id : pos) {
      if (!known.contains(id)) throw InputError("positive list names unknown case '" + id + "'");
    }
    for (auto& r : rows) r.positive = pos.contains(r.id);
  }
  EvaluationSummary s = evaluate_rows(std::move(rows));
  fs::create_directories(o.out_dir);
  write_json(to_json(s), o.out_dir / "summary.json");
  write_scatter_csv(s, o.jitter_pct, o.seed, o.out_dir / "scatter.csv");
  return s;
}

// phantom ---------------------------------------------------------------------------

inline std::uint64_t case_seed(std::uint64_t seed, std::size_t i) {
  return rng::mix_seed(rng::mix_seed(seed) + static_cast<std::uint64_t>(i));
}

inline std::string case_id(std::size_t i) {
  std::ostringstream os;
  os << "case_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

struct PhantomOptions {
  std::optional<fs::path> spec;  // absent: randomized geometry per case
  fs::path out_dir;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PhantomPlan {
  std::optional<phantom::PhantomSpec> spec;
  std::optional<phantom::Perturbation> prediction;
  Dims random_dims{24, 48, 48};
  Spacing random_spacing{3.0, 1.5, 1.5};
};

/// Spec file: a phantom spec, plus optional `"prediction": {dilate_vox,
/// erode_vox, speckle_prob}`. With `"randomize": true` only dims/spacing are
/// taken and the geometry is drawn per case.
inline PhantomPlan read_phantom_plan(const std::optional<fs::path>& spec_path) {
  PhantomPlan plan;
  if (!spec_path) return plan;
  const auto j = read_json(*spec_path);
  if (!j.is_object()) throw InputError("phantom spec must be a JSON object");
  try {
    if (j.contains("prediction")) {
      const auto& p = j.at("prediction");
      phantom::Perturbation pert;
      pert.dilate_vox = p.value("dilate_vox", 0);
      pert.erode_vox = p.value("erode_vox", 0);
      pert.speckle_prob = p.value("speckle_prob", 0.0);
      if (pert.dilate_vox < 0 || pert.erode_vox < 0 || !(pert.speckle_prob >= 0.0 && pert.speckle_prob <= 1.0)) {
        throw InputError("invalid phantom spec: prediction perturbation out of range");
      }
      plan.prediction = pert;
    }
    if (j.value("randomize", false)) {
      const phantom::PhantomSpec s = j.get<phantom::PhantomSpec>();
      plan.random_dims = s.dims;
      plan.random_spacing = s.spacing;
    } else {
      plan.spec = j.get<phantom::PhantomSpec>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid phantom spec: ") + e.what());
  }
  phantom::validate(plan.spec ? *plan.spec : phantom::random_spec(0, plan.random_dims, plan.random_spacing));
  return plan;
}

inline phantom::PhantomSpec spec_for_case(const PhantomPlan& plan, std::uint64_t seed) {
  if (!plan.spec) return phantom::random_spec(seed, plan.random_dims, plan.random_spacing);
  phantom::PhantomSpec s = *plan.spec;
  s.seed = seed;
  return s;
}

inline void write_case(const phantom::PhantomCase& c, const phantom::PhantomSpec& spec,
                       const std::optional<phantom::Perturbation>& prediction, const fs::path& dir) {
  fs::create_directories(dir);
  write_volume(c.volume, dir / (std::string(kVolumeName) + ".json"), DType::kInt16);
  write_mask(c.lobes, dir / (std::string(kLobesName) + ".json"));
  write_mask(c.abnorm_gt, dir / (std::string(kAbnormGtName) + ".json"));
  if (prediction) {
    write_mask(phantom::make_noisy_prediction(c, *prediction, rng::mix_seed(spec.seed ^ 0x9ed1c7ULL)),
               dir / (std::string(kAbnormPredName) + ".json"));
  }
  write_json(ojson(nlohmann::json(c.oracle)), dir / kOracleName);
  ojson sj = nlohmann::json(spec);
  sj["lesions"] = nlohmann::json(c.lesions);
  write_json(sj, dir / "spec.json");
}

/// Generates `count` cases as <out_dir>/case_NNNN/. Returns the case ids.
inline std::vector<std::string> run_phantom(const PhantomOptions& o) {
  if (o.count < 1) throw InputError("--count must be >= 1");
  const PhantomPlan plan = read_phantom_plan(o.spec);
  fs::create_directories(o.out_dir);
  std::vector<std::string> ids(o.count);
  parallel_for(o.count, o.workers, [&](std::size_t i) {
    ids[i] = case_id(i);
    const phantom::PhantomSpec spec = spec_for_case(plan, case_seed(o.seed, i));
    write_case(phantom::generate(spec), spec, plan.prediction, o.out_dir / ids[i]);
  });
  return ids;
}

// preprocess ------------------------------------------------------------------------

inline constexpr Dims kDefaultBox{384, 384, 384};
inline constexpr Spacing kTrainingSpacing{3.0, 1.0, 1.0};

struct PreprocessOptions {
  fs::path volume;
  fs::path lobes;
  fs::path out_dir;
  Dims box = kDefaultBox;
  Spacing spacing = kTrainingSpacing;
  WindowSpec window{};
};

struct Preprocessed {
  Volume tensor;      // float32, normalized
  LabelMask lobes;    // cropped alongside
  Index3 center;      // in resampled voxel coordinates
};

/// resample -> crop around the lung center (pad -1024 HU) -> clip/normalize.
inline Preprocessed preprocess(const Volume& v, const LabelMask& lobes, const Dims& box, const Spacing& spacing,
                               const WindowSpec& window) {
  if (!v.same_geometry(lobes)) {
    throw GeometryError("volume " + v.dims().str() + " @ " + v.spacing().str() + " and lobes " + lobes.dims().str() +
                        " @ " + lobes.spacing().str() + " differ");
  }
  if (v.normalized()) throw InputError("preprocess expects a HU volume");
  const Volume rv = resample(v, spacing);
  const LabelMask rl = resample(lobes, spacing);
  const Index3 c = lung_center(rl);
  return {clip_normalize(crop_box(rv, c, box, kAirHu), window), crop_box<std::uint8_t>(rl, c, box, 0), c};
}

inline Preprocessed run_preprocess(const PreprocessOptions& o) {
  const Preprocessed p = preprocess(read_volume(o.volume), read_mask(o.lobes), o.box, o.spacing, o.window);
  fs::create_directories(o.out_dir);
  write_volume(p.tensor, o.out_dir / "input.json", DType::kFloat32);
  write_mask(p.lobes, o.out_dir / "lobes.json");
  return p;
}

// train-toy ------------------------------------------------------------------------

struct TrainToyConfig {
  fs::path data_dir;
  fs::path out_dir;
  Dims box{8, 32, 32};
  toynet::NetConfig net;
  toynet::TrainConfig train;
};

/// Required: data_dir, out_dir. Optional: iterations, seed, val_fraction,
/// augment, box [Z,Y,X], net {...}, optimizer {...}. Relative paths resolve
/// against the config file's directory.
inline TrainToyConfig parse_train_config(const nlohmann::json& j, const fs::path& base) {
  if (!j.is_object()) throw InputError("train config must be a JSON object");
  std::vector<std::string> missing;
  for (const char* k : {"data_dir", "out_dir"})
    if (!j.contains(k)) missing.push_back(k);
  if (!missing.empty()) {
    std::string msg = "train config is missing required field(s):";
    for (const auto& m : missing) msg += " " + m;
    throw InputError(msg);
  }
  TrainToyConfig c;
  try {
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    c.data_dir = resolve(j.at("data_dir").get<std::string>());
    c.out_dir = resolve(j.at("out_dir").get<std::string>());
    if (j.contains("box")) {
      const auto b = j.at("box").get<std::array<std::int64_t, 3>>();
      c.box = {b[0], b[1], b[2]};
    }
    c.train.iterations = j.value("iterations", c.train.iterations);
    c.train.seed = j.value("seed", c.train.seed);
    c.train.val_fraction = j.value("val_fraction", c.train.val_fraction);
    c.train.augment = j.value("augment", c.train.augment);
    c.net.seed = c.train.seed;
    if (j.contains("net")) {
      const auto& n = j.at("net");
      c.net.stem_channels = n.value("stem_channels", c.net.stem_channels);
      c.net.layers_per_block = n.value("layers_per_block", c.net.layers_per_block);
      c.net.growth_rate = n.value("growth_rate", c.net.growth_rate);
      c.net.decoder_channels = n.value("decoder_channels", c.net.decoder_channels);
      c.net.leaky_slope = n.value("leaky_slope", c.net.leaky_slope);
      c.net.norm_enabled = n.value("norm_enabled", c.net.norm_enabled);
      c.net.seed = n.value("seed", c.net.seed);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      auto& a = c.train.optimizer;
      a.lr = o.value("lr", a.lr);
      a.final_lr = o.value("final_lr", a.final_lr);
      a.gamma = o.value("gamma", a.gamma);
      a.beta1 = o.value("beta1", a.beta1);
      a.beta2 = o.value("beta2", a.beta2);
      a.eps = o.value("eps", a.eps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid train config: ") + e.what());
  }
  c.net.validate();
  c.train.validate();
  return c;
}

struct TrainToyResult {
  std::vector<std::string> case_ids;
  toynet::TrainResult result;
};

inline TrainToyResult run_train_toy(const TrainToyConfig& c) {
  const auto dirs = case_dirs(c.data_dir);
  TrainToyResult out;
  std::vector<toynet::Sample> data;
  for (const auto& d : dirs) {
    out.case_ids.push_back(d.filename().string());
    data.push_back(toynet::make_sample(read_volume(d / (std::string(kVolumeName) + ".json")),
                                       read_mask(d / (std::string(kLobesName) + ".json")),
                                       read_mask(d / (std::string(kAbnormGtName) + ".json")), c.box));
  }
  toynet::ToyNet net(c.net);
  out.result = toynet::train(net, c.train, data);
  fs::create_directories(c.out_dir);
  toynet::write_loss_csv(out.result.history, c.out_dir / "loss.csv");
  toynet::save_params(out.result.best_params, c.out_dir / "best.json");
  toynet::save_params(net.params(), c.out_dir / "final.json");
  ojson s;
  s["iterations"] = c.train.iterations;
  s["seed"] = c.train.seed;
  s["best_iteration"] = out.result.best_iteration;
  s["best_val_loss"] = out.result.best_val_loss;
  s["initial_train_loss"] = out.result.initial_train_loss;
  s["final_train_loss"] = out.result.final_train_loss;
  s["skipped_steps"] = out.result.skipped_steps;
  auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> v;
    for (auto i : idx) v.push_back(out.case_ids[i]);
    return v;
  };
  s["train_cases"] = ids(out.result.train_indices);
  s["val_cases"] = ids(out.result.val_indices);
  write_json(s, c.out_dir / "train_summary.json");
  return out;
}

}  // namespace lungsev::cli
