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

// lungsev: severity quantification, cohort evaluation, phantoms,
// preprocessing and toy training from the command line.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lungsev/commands.hpp"

namespace {

namespace cli = lungsev::cli;
namespace fs = std::filesystem;

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("LUNGSEV_LOG");
  if (env == nullptr) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const auto level = spdlog::level::from_str(env);
  // from_str maps unknown names to "off"; only honour it when asked for.
  if (level == spdlog::level::off && std::string(env) != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("unknown LUNGSEV_LOG level '{}', using info", env);
    return;
  }
  spdlog::set_level(level);
}

struct Options {
  // shared
  double threshold_hu = lungsev::severity::kDefaultThresholdHu;
  double jitter_pct = 0.2;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string box;
  std::string spacing;
  std::string out;
  // quantify
  std::string volume, lobes, abnormal, cases;
  std::string abnormal_name = cli::kAbnormPredName;
  // evaluate
  std::string pred, gt, manifest, positive_list;
  // phantom
  std::string spec;
  std::size_t count = 1;
  // train-toy
  std::string config;
};

int run(CLI::App& app, const Options& o) {
  if (app.got_subcommand("quantify")) {
    if (!o.cases.empty()) {
      const auto ids = cli::run_quantify_cases(o.cases, o.abnormal_name, o.out, o.threshold_hu, o.workers);
      spdlog::info("quantified {} cases into {}", ids.size(), o.out);
      return cli::kExitOk;
    }
    if (o.volume.empty() || o.lobes.empty() || o.abnormal.empty()) {
      throw lungsev::InputError("quantify needs --volume, --lobes and --abnormal, or --cases");
    }
    const auto j = cli::run_quantify({o.volume, o.lobes, o.abnormal}, o.out, o.threshold_hu);
    spdlog::info("PO {:.4f}%  PHO {:.4f}%  LSS {}  LHOS {}  ({:.3f} s)", j["po"].get<double>(),
                 j["pho"].get<double>(), j["lss"].get<int>(), j["lhos"].get<int>(),
                 j["elapsed_seconds"].get<double>());
    return cli::kExitOk;
  }
  if (app.got_subcommand("evaluate")) {
    cli::EvaluateOptions e;
    e.pred_dir = o.pred;
    e.gt_dir = o.gt;
    e.out_dir = o.out;
    if (!o.manifest.empty()) e.manifest = o.manifest;
    if (!o.positive_list.empty()) e.positive_list = o.positive_list;
    if (o.manifest.empty() && (o.pred.empty() || o.gt.empty())) {
      throw lungsev::InputError("evaluate needs --pred and --gt, or --manifest");
    }
    e.jitter_pct = o.jitter_pct;
    e.seed = o.seed;
    e.workers = o.workers;
    const auto s = cli::run_evaluate(e);
    spdlog::info("evaluated {} cases ({} positive) into {}", s.n_cases, s.n_positive, o.out);
    for (const auto& [k, why] : s.undefined) spdlog::debug("undefined {}: {}", k, why);
    return cli::kExitOk;
  }
  if (app.got_subcommand("phantom")) {
    cli::PhantomOptions p;
    if (!o.spec.empty()) p.spec = o.spec;
    p.out_dir = o.out;
    p.count = o.count;
    p.seed = o.seed;
    p.workers = o.workers;
    const auto ids = cli::run_phantom(p);
    spdlog::info("wrote {} phantom cases to {}", ids.size(), o.out);
    return cli::kExitOk;
  }
  if (app.got_subcommand("preprocess")) {
    cli::PreprocessOptions p;
    p.volume = o.volume;
    p.lobes = o.lobes;
    p.out_dir = o.out;
    if (!o.box.empty()) p.box = cli::parse_dims(o.box);
    if (!o.spacing.empty()) p.spacing = cli::parse_spacing(o.spacing);
    const auto r = cli::run_preprocess(p);
    spdlog::info("tensor {} written to {}", r.tensor.dims().str(), o.out);
    return cli::kExitOk;
  }
  if (app.got_subcommand("train-toy")) {
    const fs::path cfg_path(o.config);
    auto cfg = cli::parse_train_config(cli::read_json(cfg_path), cfg_path.parent_path());
    if (app.get_subcommand("train-toy")->count("--seed") > 0) {
      cfg.train.seed = o.seed;
      cfg.net.seed = o.seed;
    }
    const auto r = cli::run_train_toy(cfg);
    spdlog::info("train loss {:.4f} -> {:.4f}; best validation {:.4f} at iteration {}", r.result.initial_train_loss,
                 r.result.final_train_loss, r.result.best_val_loss, r.result.best_iteration);
    return cli::kExitOk;
  }
  throw lungsev::InputError("no subcommand given; see --help");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"lungsev: lung opacity severity from CT volumes and masks"};
  app.require_subcommand(1);
  Options o;

  auto* q = app.add_subcommand("quantify", "Severity report for one case or a directory of cases");
  q->add_option("--volume", o.volume, "HU volume header (.json)");
  q->add_option("--lobes", o.lobes, "Lobe label mask (.json)");
  q->add_option("--abnormal", o.abnormal, "Binary abnormality mask (.json)");
  q->add_option("--cases", o.cases, "Directory of case subdirectories (batch mode)");
  q->add_option("--abnormal-name", o.abnormal_name, "Mask name inside each case directory")->capture_default_str();
  q->add_option("--out", o.out, "Output directory")->required();
  q->add_option("--threshold-hu", o.threshold_hu, "High-opacity threshold in HU")->capture_default_str();
  q->add_option("--workers", o.workers, "Parallel cases")->capture_default_str();

  auto* e = app.add_subcommand("evaluate", "Compare predicted and ground-truth report sets");
  e->add_option("--pred", o.pred, "Directory of predicted reports");
  e->add_option("--gt", o.gt, "Directory of ground-truth reports");
  e->add_option("--manifest", o.manifest, "CSV case_id,pred,gt overriding stem pairing");
  e->add_option("--positive-list", o.positive_list, "Case ids counted as positive for correlations");
  e->add_option("--out", o.out, "Output directory")->required();
  e->add_option("--jitter-pct", o.jitter_pct, "Scatter jitter, percent of metric range")->capture_default_str();
  e->add_option("--seed", o.seed, "Jitter seed")->capture_default_str();
  e->add_option("--workers", o.workers, "Parallel report readers")->capture_default_str();

  auto* p = app.add_subcommand("phantom", "Generate synthetic phantom cases with oracle reports");
  p->add_option("--spec", o.spec, "Phantom spec JSON (default: randomized geometry)");
  p->add_option("--out", o.out, "Output directory")->required();
  p->add_option("--count", o.count, "Number of cases")->capture_default_str();
  p->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  p->add_option("--workers", o.workers, "Parallel cases")->capture_default_str();

  auto* pp = app.add_subcommand("preprocess", "Resample, crop and window a volume into a network tensor");
  pp->add_option("--volume", o.volume, "HU volume header (.json)")->required();
  pp->add_option("--lobes", o.lobes, "Lobe label mask (.json)")->required();
  pp->add_option("--out", o.out, "Output directory")->required();
  pp->add_option("--box", o.box, "Crop box Z,Y,X (default 384,384,384)");
  pp->add_option("--spacing", o.spacing, "Target spacing Z,Y,X in mm (default 3,1,1)");

  auto* t = app.add_subcommand("train-toy", "Train the toy segmentation network on phantom cases");
  t->add_option("--config", o.config, "Training config JSON")->required();
  t->add_option("--seed", o.seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::Error& ex) {
    app.exit(ex);
    return cli::kExitInput;
  }

  try {
    return run(app, o);
  } catch (...) {
    std::string message;
    const int code = cli::exit_code_for(std::current_exception(), message);
    spdlog::error("{}", message);
    return code;
  }
}
