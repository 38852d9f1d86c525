#pragma once

// Command-line front end. Four subcommands:
//   offline  build and persist a reduced model for one level
//   online   reconstruct from simulated or ingested data against a saved model
//   oracle   recompute the singular spectrum two ways and certify the model
//   repro    offline+online across levels 0..max-level, oracle where feasible
//
// Every run gets a deterministic id derived from the resolved configuration
// and writes into <out-root>/<run-id>/. The resolved configuration is echoed
// to config.json before any computation starts. Exit codes: 0 success,
// 1 invalid input, 2 numerical failure, 3 certification failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdot/harness.hpp"
#include "fdot/model_io.hpp"
#include "fdot/sha256.hpp"

namespace fdot {

struct RunConfig {
  std::string command;
  int level = 0;
  int max_level = 3;             // repro: last end-to-end level
  int oracle_max_level = 2;      // repro: last certified level
  int structural_max_level = -1; // repro: rank-only levels above max_level (-1 = off)
  double delta = 1e-5;
  double epsilon = 0.0;
  double tau = 1.5;
  int alpha_grid_max_exponent = 16;
  std::uint64_t seed = 1;
  std::string gram_variant = "L2";
  std::string filter = "tikhonov";
  std::string out_root = "out";
  bool baselines = false;
  bool save_ak = true;
  bool physical_basis = false;
  std::string model_path;
  std::string data_path;
};

inline void validate_config(const RunConfig& cfg) {
  if (!(cfg.delta > 0)) throw ValidationError("delta must be > 0");
  if (cfg.epsilon < 0) throw ValidationError("epsilon must be >= 0");
  if (!(cfg.tau >= 1.0)) throw ValidationError("tau must be >= 1");
  if (cfg.level < 0) throw ValidationError("level must be >= 0");
  if (cfg.max_level < 0) throw ValidationError("max-level must be >= 0");
  if (cfg.alpha_grid_max_exponent < 1 || cfg.alpha_grid_max_exponent > 16)
    throw ValidationError("alpha-max-exp must be in [1,16]");
  parse_gram(cfg.gram_variant);
  if (cfg.filter != "tikhonov" && cfg.filter != "tsvd")
    throw ValidationError("filter must be tikhonov or tsvd (got '" + cfg.filter + "')");
}

inline nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = cfg.command;
  j["level"] = cfg.level;
  j["max_level"] = cfg.max_level;
  j["oracle_max_level"] = cfg.oracle_max_level;
  j["structural_max_level"] = cfg.structural_max_level;
  j["delta"] = cfg.delta;
  j["epsilon"] = cfg.epsilon;
  j["tau"] = cfg.tau;
  j["alpha_grid_max_exponent"] = cfg.alpha_grid_max_exponent;
  j["seed"] = cfg.seed;
  j["gram_variant"] = cfg.gram_variant;
  j["filter"] = cfg.filter;
  j["baselines"] = cfg.baselines;
  j["save_ak"] = cfg.save_ak;
  j["physical_basis"] = cfg.physical_basis;
  j["model_path"] = cfg.model_path;
  j["data_path"] = cfg.data_path;
  return j;
}

inline std::string run_id(const RunConfig& cfg) {
  const std::string hash = sha256_hex(config_to_json(cfg).dump()).substr(0, 12);
  if (cfg.command == "repro") return "repro-" + hash;
  if (cfg.command == "online") return "online-" + hash;
  return cfg.command + "-l" + std::to_string(cfg.level) + "-" + hash;
}

namespace detail {

/// Resolve the run directory, create it, and echo the configuration.
inline std::string begin_run(const RunConfig& cfg, std::ostream& log) {
  std::string root = cfg.out_root;
  if (const char* env = std::getenv("FDOT_OUT_ROOT"); env && *env) root = env;
  const std::string dir = root + "/" + run_id(cfg);
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json echo = config_to_json(cfg);
  echo["out_dir"] = dir;
  echo["run_id"] = run_id(cfg);
  {
    std::ofstream f(dir + "/config.json", std::ios::binary);
    if (!f) throw ValidationError("cannot write " + dir + "/config.json");
    f << echo.dump(2) << "\n";
  }
  log << echo.dump(2) << "\n";
  return dir;
}

inline void write_report(const nlohmann::ordered_json& report, const std::string& dir) {
  std::ofstream f(dir + "/report.json", std::ios::binary);
  if (!f) throw ValidationError("cannot write " + dir + "/report.json");
  f << report.dump(2) << "\n";
}

inline Filter parse_filter(const std::string& s) {
  return s == "tsvd" ? Filter::tsvd : Filter::tikhonov;
}

inline int cmd_offline(const RunConfig& cfg, std::ostream& log) {
  const std::string dir = begin_run(cfg, log);
  ProblemParams params;
  params.gram = parse_gram(cfg.gram_variant);
  OfflineResult off = run_offline(cfg.level, cfg.delta, cfg.epsilon, params);
  if (off.model.N() > 0) save_model(off.model, off.mesh, dir + "/model", cfg.save_ak, params.gram);
  emit_tables({off.record}, dir);
  nlohmann::ordered_json report;
  report["levels"] = nlohmann::ordered_json::array({record_to_json(off.record)});
  write_report(report, dir);
  log << "offline: level " << cfg.level << " N=" << off.model.N() << " NK=" << off.model.NK()
      << " -> " << dir << "\n";
  return 0;
}

inline int cmd_online(const RunConfig& cfg, std::ostream& log) {
  if (cfg.model_path.empty()) throw ValidationError("online requires --model");
  const std::string dir = begin_run(cfg, log);
  LoadedModel loaded = load_model(cfg.model_path);
  ProblemParams params;
  params.gram = loaded.gram;
  const TruthOperator op = build_truth_operator(loaded.mesh, params.excitation, params.emission,
                                                params.gram);
  ensure_fingerprint(loaded.model, loaded.mesh);

  LevelRecord record;
  record.level = loaded.model.mesh_level;
  record.m = loaded.mesh.n_vertices();
  record.k = loaded.mesh.n_boundary();
  record.xK = loaded.model.selection.xK();
  record.mK = loaded.model.selection.mK();
  record.K = loaded.model.cross.K;
  record.NK = loaded.model.NK();
  record.N = loaded.model.N();

  Stopwatch watch;
  Reconstruction rec;
  if (cfg.data_path.empty()) {
    const Phantom phantom = make_phantom(loaded.mesh, default_phantom_spec());
    OnlineResult online =
        run_online(op, loaded.model, phantom, cfg.delta, cfg.seed, cfg.tau,
                   parse_filter(cfg.filter), cfg.baselines, cfg.alpha_grid_max_exponent);
    record.t_online = watch.seconds();
    fill_online_record(record, online);
    rec = std::move(online.choice.rec);
    emit_image(phantom.c_dagger, loaded.mesh, dir + "/phantom.pgm");
  } else {
    Measurement meas;
    meas.stage = MeasurementStage::raw;
    meas.matrix = load_matrix(cfg.data_path, "data");
    meas.delta = cfg.delta;
    meas.fingerprint = loaded.model.fingerprint;
    const Measurement reduced = to_reduced(meas, loaded.model, cfg.physical_basis);
    AlphaChoice choice =
        choose_alpha_discrepancy(reduced.vector, loaded.model, cfg.delta, cfg.tau,
                                 cfg.alpha_grid_max_exponent, parse_filter(cfg.filter));
    record.t_online = watch.seconds();
    record.has_online = true;
    record.alpha_exponent = choice.exponent;
    record.alpha_satisfied = choice.satisfied;
    record.discrepancy = choice.rec.discrepancy;
    rec = std::move(choice.rec);
  }
  emit_image(rec.c, loaded.mesh, dir + "/reconstruction.pgm");

  nlohmann::ordered_json report;
  report["levels"] = nlohmann::ordered_json::array({record_to_json(record)});
  report["alpha"] = rec.alpha;
  write_report(report, dir);
  log << "online: alpha=" << rec.alpha << " discrepancy=" << rec.discrepancy << " -> " << dir
      << "\n";
  return 0;
}

inline int cmd_oracle(const RunConfig& cfg, std::ostream& log) {
  const std::string dir = begin_run(cfg, log);
  ProblemParams params;
  params.gram = parse_gram(cfg.gram_variant);
  Stopwatch watch;
  OfflineResult off = run_offline(cfg.level, cfg.delta, cfg.epsilon, params);
  const CertificationReport rep = certify(off.model, off.op);
  off.record.t_oracle = watch.seconds();
  fill_oracle_record(off.record, rep);
  write_oracle_csv({{cfg.level, rep}}, dir + "/oracle.csv");
  nlohmann::ordered_json report;
  report["levels"] = nlohmann::ordered_json::array({record_to_json(off.record)});
  report["verdict"] = rep.verdict ? "PASS" : "FAIL";
  write_report(report, dir);
  log << "oracle: level " << cfg.level << " N=" << rep.N << " N_svd=" << rep.N_svd << " verdict "
      << (rep.verdict ? "PASS" : "FAIL") << " -> " << dir << "\n";
  return rep.verdict ? 0 : 3;
}

inline int cmd_repro(const RunConfig& cfg, std::ostream& log) {
  const std::string dir = begin_run(cfg, log);
  ProblemParams params;
  params.gram = parse_gram(cfg.gram_variant);

  std::vector<LevelRecord> records;
  std::vector<std::pair<int, CertificationReport>> oracles;
  nlohmann::ordered_json report;
  report["levels"] = nlohmann::ordered_json::array();
  bool all_verdicts_pass = true;

  for (int level = 0; level <= cfg.max_level; ++level) {
    OfflineResult off = run_offline(level, cfg.delta, cfg.epsilon, params);
    if (!off.record.trivial) {
      const Phantom phantom = make_phantom(off.mesh, default_phantom_spec());
      Stopwatch watch;
      OnlineResult online =
          run_online(off.op, off.model, phantom, cfg.delta, cfg.seed, cfg.tau,
                     parse_filter(cfg.filter), cfg.baselines, cfg.alpha_grid_max_exponent);
      off.record.t_online = watch.seconds();
      fill_online_record(off.record, online);
      if (level == cfg.max_level) {
        emit_image(phantom.c_dagger, off.mesh, dir + "/phantom.pgm");
        emit_image(online.choice.rec.c, off.mesh, dir + "/reconstruction.pgm");
        save_model(off.model, off.mesh, dir + "/model", cfg.save_ak, params.gram);
      }
      if (level <= cfg.oracle_max_level) {
        Stopwatch owatch;
        const CertificationReport rep = certify(off.model, off.op);
        off.record.t_oracle = owatch.seconds();
        fill_oracle_record(off.record, rep);
        all_verdicts_pass = all_verdicts_pass && rep.verdict;
        oracles.emplace_back(level, rep);
      }
    }
    log << "repro: level " << level << " m=" << off.record.m << " N=" << off.record.N
        << (off.record.has_oracle ? (off.record.verdict ? " verdict PASS" : " verdict FAIL") : "")
        << "\n";
    report["levels"].push_back(record_to_json(off.record));
    records.push_back(off.record);
  }

  for (int level = cfg.max_level + 1; level <= cfg.structural_max_level; ++level) {
    const StructuralRecord s = structural_offline(level, cfg.delta, cfg.epsilon, params);
    LevelRecord r;
    r.level = s.level;
    r.m = s.m;
    r.k = s.k;
    r.xK = s.xK;
    r.mK = s.mK;
    r.K = s.K;
    r.NK = s.NK;
    r.N = s.N;
    r.norm_T = s.norm_T;
    r.t_offline = s.t_total;
    log << "repro: level " << level << " (structural) m=" << s.m << " xK=" << s.xK
        << " mK=" << s.mK << " N=" << s.N << "\n";
    report["levels"].push_back(record_to_json(r));
    records.push_back(r);
  }

  emit_tables(records, dir);
  if (!oracles.empty()) write_oracle_csv(oracles, dir + "/oracle.csv");
  report["all_verdicts_pass"] = all_verdicts_pass;
  write_report(report, dir);
  log << "repro: tables and report -> " << dir << "\n";
  return all_verdicts_pass ? 0 : 3;
}

}  // namespace detail

/// Parse arguments (without argv[0]) and run. Used by main() and by tests.
inline int run_cli(const std::vector<std::string>& args, std::ostream& log = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"certified low-rank reduction for operator-valued inverse problems"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--delta", cfg.delta, "truncation / noise level");
    sub->add_option("--epsilon", cfg.epsilon, "hyperbolic cross exponent");
    sub->add_option("--gram", cfg.gram_variant, "field-space Gram variant (L2 or H1)");
    sub->add_option("--out", cfg.out_root, "output root directory");
    sub->add_option("--seed", cfg.seed, "noise seed");
  };

  bool no_ak = false;
  CLI::App* offline = app.add_subcommand("offline", "build and persist a reduced model");
  add_common(offline);
  offline->add_option("--level", cfg.level, "mesh refinement level");
  offline->add_flag("--no-ak", no_ak, "do not persist the cross matrix");

  CLI::App* online = app.add_subcommand("online", "reconstruct against a saved model");
  add_common(online);
  online->add_option("--model", cfg.model_path, "model directory")->required();
  online->add_option("--data", cfg.data_path, "measurement matrix file (simulates if absent)");
  online->add_option("--tau", cfg.tau, "discrepancy factor");
  online->add_option("--alpha-max-exp", cfg.alpha_grid_max_exponent,
                     "largest exponent n in the alpha grid 10^-n");
  online->add_option("--filter", cfg.filter, "regularization filter (tikhonov or tsvd)");
  online->add_flag("--baselines", cfg.baselines, "also run full and tensor CG baselines");
  online->add_flag("--physical-basis", cfg.physical_basis,
                   "ingested data is in the physical source/detector basis");

  CLI::App* oracle = app.add_subcommand("oracle", "certify the reduced model spectrum");
  add_common(oracle);
  oracle->add_option("--level", cfg.level, "mesh refinement level");

  CLI::App* repro = app.add_subcommand("repro", "full experiment sweep across levels");
  add_common(repro);
  repro->add_option("--max-level", cfg.max_level, "last end-to-end level");
  repro->add_option("--oracle-max-level", cfg.oracle_max_level, "last certified level");
  repro->add_option("--structural-max-level", cfg.structural_max_level,
                    "run rank-only passes up to this level");
  repro->add_option("--tau", cfg.tau, "discrepancy factor");
  repro->add_option("--alpha-max-exp", cfg.alpha_grid_max_exponent,
                    "largest exponent n in the alpha grid 10^-n");
  repro->add_option("--filter", cfg.filter, "regularization filter (tikhonov or tsvd)");
  repro->add_flag("--baselines", cfg.baselines, "also run full and tensor CG baselines");
  repro->add_flag("--no-ak", no_ak, "do not persist the cross matrix");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (offline->parsed()) cfg.command = "offline";
    if (online->parsed()) cfg.command = "online";
    if (oracle->parsed()) cfg.command = "oracle";
    if (repro->parsed()) cfg.command = "repro";
    cfg.save_ak = !no_ak;
    validate_config(cfg);
    if (offline->parsed()) return detail::cmd_offline(cfg, log);
    if (online->parsed()) return detail::cmd_online(cfg, log);
    if (oracle->parsed()) return detail::cmd_oracle(cfg, log);
    return detail::cmd_repro(cfg, log);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace fdot
