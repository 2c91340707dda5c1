/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/pipeline.hpp"
#include "sherdmatch/service/http.hpp"

namespace fs = std::filesystem;
using namespace sherdmatch;

namespace {

// Exit codes:
//   0 success            4 invalid configuration
//   1 internal error     5 bad data or shape
//   2 usage error        6 numeric failure (non-finite loss)
//   3 missing input      7 integrity failure (hash/format mismatch)
int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInternal: return 1;
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kMissingInput: return 3;
    case ErrorKind::kConfig: return 4;
    case ErrorKind::kShape:
    case ErrorKind::kData: return 5;
    case ErrorKind::kNumeric: return 6;
    case ErrorKind::kIntegrity: return 7;
  }
  return 1;
}

int fail(int code, const char* kind, const std::string& msg) {
  std::string clean;
  for (char c : msg) {
    if (c == '"' || c == '\\') clean += '\\';
    clean += (c == '\n' || c == '\r') ? ' ' : c;
  }
  std::fprintf(stderr, "error code=%d kind=%s msg=\"%s\"\n", code, kind, clean.c_str());
  return code;
}

template <template <typename> class F, typename... Args>
auto with_precision(vae::Precision p, Args&&... args) {
  if (p == vae::Precision::kFloat64) return F<double>{}(std::forward<Args>(args)...);
  return F<float>{}(std::forward<Args>(args)...);
}

template <typename T>
struct Train {
  void operator()(const fs::path& dir, const pipeline::PipelineConfig& c, bool resume, pipeline::RunLog& log) const {
    const auto s = pipeline::run_train<T>(dir, c, resume, log);
    char buf[96];
    std::snprintf(buf, sizeof buf, "trained %d epochs in %.1f s", s.epochs_run, s.seconds);
    log(buf);
  }
};

template <typename T>
struct Encode {
  std::size_t operator()(const fs::path& dir, int threads) const { return pipeline::run_encode<T>(dir, threads).rows.size(); }
};

template <typename T>
struct Robust {
  eval::RobustnessReport operator()(const fs::path& dir, std::uint64_t seed, int threads, bool allow,
                                    eval::LatentNoise noise) const {
    return pipeline::run_robustness<T>(dir, seed, threads, allow, noise);
  }
};

template <typename T>
struct Eval {
  eval::ReconstructionReport operator()(const fs::path& dir, int threads) const { return pipeline::run_eval<T>(dir, threads); }
};

vae::Precision checkpoint_precision(const fs::path& dir) {
  return vae::read_checkpoint_config(dir / "checkpoint.bin").precision;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sherdmatch: unsupervised matching of binary pottery profiles"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out = ".";
  std::uint64_t seed = 0;
  int threads = 1;
  bool quiet = false;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for splitting, training and evaluation");
  app.add_option("--config", config_path, "Pipeline config JSON");
  app.add_option("--out", out, "Output (run) directory");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "Only errors on stderr");

  auto* synth = app.add_subcommand("synth", "Generate synthetic rim drawings");
  int count = 200, families = 4;
  std::size_t image_size = 64;
  synth->add_option("--count", count)->check(CLI::NonNegativeNumber);
  synth->add_option("--families", families);

  auto* prepare = app.add_subcommand("prepare", "Normalize, split and augment a directory of drawings");
  std::string input;
  prepare->add_option("--input", input, "Directory of IDCAT-PAGNUM.FIGID.png files")->required();

  auto* train = app.add_subcommand("train", "Train the VAE on the prepared manifest");
  bool resume = false;
  int epochs = 0;
  train->add_flag("--resume", resume, "Continue from checkpoint.bin");
  train->add_option("--epochs", epochs, "Override the epoch count")->check(CLI::PositiveNumber);

  auto* encode = app.add_subcommand("encode", "Write features.csv for every original profile");

  auto* clus = app.add_subcommand("cluster", "Select linkage/metric and write dendrogram.json");
  std::string features;
  clus->add_option("--features", features, "Features CSV (default <out>/features.csv)");

  auto* seeds = app.add_subcommand("seeds", "Extract paired-leaf seeds into seeds.json");
  std::string dendrogram;
  seeds->add_option("--dendrogram", dendrogram, "Dendrogram JSON (default <out>/dendrogram.json)");

  auto* robust = app.add_subcommand("robustness", "Perturbation retrieval experiment");
  bool allow_untrained = false, additive = false;
  robust->add_flag("--allow-untrained", allow_untrained);
  robust->add_flag("--additive-noise", additive, "Latent noise scaled by the feature norm");

  auto* evalc = app.add_subcommand("eval", "Reconstruction MSE/IoU per split");

  auto* serve = app.add_subcommand("serve", "Run the catalog HTTP service");
  std::string host = "127.0.0.1", origin = "*", verdicts;
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--origin", origin, "Allowed CORS origin");
  serve->add_option("--verdicts", verdicts, "Verdict log (default <out>/verdicts.jsonl)");

  auto* report = app.add_subcommand("report", "Summarize the reports of a run");

  for (auto* sc : {synth, prepare}) sc->add_option("--image-size", image_size)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    pipeline::PipelineConfig cfg;
    if (!config_path.empty()) cfg = pipeline::config_from_json(read_json(config_path));
    if (*seed_opt) {
      cfg.seed = seed;
      cfg.vae.rng_seed = seed;
    }
    cfg.threads = threads;
    cfg.quiet = quiet;
    if (epochs > 0) {
      cfg.vae.epochs = epochs;
      cfg.vae.cycles = std::min(cfg.vae.cycles, epochs);
    }
    cfg.vae.validate();
    const fs::path dir(out);
    pipeline::RunLog log(dir, quiet);
    const auto save_config = [&] { write_json(dir / "effective_config.json", pipeline::to_json(cfg)); };

    if (*synth) {
      shape::SynthOptions o;
      o.count = count;
      o.families = families;
      o.seed = cfg.seed;
      o.image_size = image_size;
      const auto r = pipeline::run_synth(dir, o);
      log("synth: wrote " + std::to_string(r.written) + " drawings to " + dir.string());
    } else if (*prepare) {
      save_config();
      const auto m = pipeline::run_prepare(input, dir, image_size, cfg.seed, cfg.test_fraction);
      log("prepare: " + std::to_string(m.originals().size()) + " originals, " + std::to_string(m.rows.size()) +
          " rows after augmentation");
    } else if (*train) {
      save_config();
      with_precision<Train>(cfg.vae.precision, dir, cfg, resume, log);
    } else if (*encode) {
      const auto n = with_precision<Encode>(checkpoint_precision(dir), dir, threads);
      log("encode: " + std::to_string(n) + " feature rows");
    } else if (*clus) {
      const fs::path f = features.empty() ? dir / "features.csv" : fs::path(features);
      const auto sel = pipeline::run_cluster(f, dir);
      const auto& b = sel.report.best();
      log("cluster: selected " + cluster::to_string(b.method) + "/" + cluster::to_string(b.metric) +
          " cophenetic " + (b.coefficient ? format_double(*b.coefficient) : "undefined"));
    } else if (*seeds) {
      const fs::path d = dendrogram.empty() ? dir / "dendrogram.json" : fs::path(dendrogram);
      const auto s = pipeline::run_seeds(d, dir);
      log("seeds: " + std::to_string(s.size()) + " seeds");
    } else if (*robust) {
      const auto rep = with_precision<Robust>(checkpoint_precision(dir), dir, cfg.seed, threads, allow_untrained,
                                              additive ? eval::LatentNoise::kAdditive : eval::LatentNoise::kMultiplicative);
      log("robustness: top-1 " + format_double(rep.top1_rate) + ", weakest " + rep.weakest);
    } else if (*evalc) {
      const auto rep = with_precision<Eval>(checkpoint_precision(dir), dir, threads);
      log("eval: " + std::to_string(rep.rows.size()) + " rows scored");
    } else if (*serve) {
      service::ServiceOptions so;
      so.run_dir = dir;
      if (!verdicts.empty()) so.verdict_log = verdicts;
      service::Catalog cat(so);
      httplib::Server srv;
      service::bind_routes(srv, cat, origin);
      log("serving " + dir.string() + " on " + host + ":" + std::to_string(port));
      if (!srv.listen(host, port)) return fail(1, "internal", "could not bind " + host + ":" + std::to_string(port));
    } else if (*report) {
      const auto j = pipeline::run_report(dir);
      std::printf("%s\n", canonical_dump(j, 2).c_str());
    }
  } catch (const Error& e) {
    return fail(exit_code(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
  return 0;
}
