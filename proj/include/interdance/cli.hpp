#pragma once

// Batch command-line surface. Every subcommand is deterministic given its
// flags and seed, and records its RunConfig next to (or inside) whatever it
// writes.
//
// A "duet directory" holds leader.idm, follower.idm, music.idf and, once
// encoded or sampled, leader.idr / follower.idr, plus run.json.

#include "interdance/gradcheck.hpp"
#include "interdance/metrics.hpp"
#include "interdance/sampler.hpp"
#include "interdance/train.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>

namespace interdance {

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json schedule;
  nlohmann::json guidance;
  nlohmann::json denoiser;
  nlohmann::json metrics;
  nlohmann::json options = nlohmann::json::object();
};

inline nlohmann::json to_json(const RunConfig& r) {
  nlohmann::json j{{"subcommand", r.subcommand}, {"seed", r.seed}, {"inputs", r.inputs}, {"outputs", r.outputs}};
  if (!r.schedule.is_null()) j["schedule"] = r.schedule;
  if (!r.guidance.is_null()) j["guidance"] = r.guidance;
  if (!r.denoiser.is_null()) j["denoiser"] = r.denoiser;
  if (!r.metrics.is_null()) j["metrics"] = r.metrics;
  if (!r.options.empty()) j["options"] = r.options;
  return j;
}

inline nlohmann::json to_json(const GuidanceConfig& g) {
  return {{"a_con", g.a_con},
          {"a_pene", g.a_pene},
          {"first_step", g.first_step},
          {"last_step", g.last_step},
          {"max_update_norm", g.max_update_norm},
          {"sharpness", g.sharpness},
          {"iterations", g.iterations}};
}

namespace cli_detail {

namespace fs = std::filesystem;

struct DuetFiles {
  fs::path dir;
  fs::path leader_motion() const { return dir / "leader.idm"; }
  fs::path follower_motion() const { return dir / "follower.idm"; }
  fs::path leader_rep() const { return dir / "leader.idr"; }
  fs::path follower_rep() const { return dir / "follower.idr"; }
  fs::path music() const { return dir / "music.idf"; }
  fs::path run() const { return dir / "run.json"; }
};

inline void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::is_regular_file(p)) throw ConfigError(flag + ": missing file " + p.string());
}

inline void make_dir(const fs::path& p, const std::string& flag) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw ConfigError(flag + ": cannot create directory " + p.string());
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw DataError(p.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

inline BodyModel load_model(const std::string& path) {
  return path.empty() ? default_body_model() : load_body_model(path);
}

/// Point clouds of one side of a duet directory: from the representation
/// when present, else from the motion file.
inline PointSequence load_points(const fs::path& rep, const fs::path& motion, const BodyModel& model,
                                 const std::string& flag) {
  if (fs::is_regular_file(rep)) return decode(read_rep(rep.string()), model);
  require_file(motion, flag);
  return realize_motion(model, read_motion(motion.string())).frames;
}

inline EvalDuet load_eval_duet(const fs::path& dir, const BodyModel& model, const std::string& flag) {
  const DuetFiles f{dir};
  require_file(f.music(), flag);
  EvalDuet d{load_points(f.leader_rep(), f.leader_motion(), model, flag),
             load_points(f.follower_rep(), f.follower_motion(), model, flag), load_music_features(f.music().string())};
  if (d.leader.size() != d.follower.size()) throw DataError(dir.string() + ": leader and follower frame counts differ");
  return d;
}

inline double max_point_error(const PointSequence& a, const PointSequence& b) {
  if (a.size() != b.size()) throw DataError("frame count mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (int i = 0; i < kPointCount; ++i) worst = std::max(worst, (a[t].point(i) - b[t].point(i)).norm());
  }
  return worst;
}

inline void write_trace(const fs::path& p, const std::vector<StepTrace>& trace) {
  std::ofstream out(p);
  if (!out) throw DataError(p.string() + ": cannot open for writing");
  out << std::setprecision(9);
  for (const auto& s : trace) {
    out << "step=" << s.step << " guided=" << (s.guided ? 1 : 0);
    if (s.guided) {
      out << " L_con_before=" << s.refine.contact_before << " L_con_after=" << s.refine.contact_after
          << " G_pene_before=" << s.refine.penetration_before << " G_pene_after=" << s.refine.penetration_after;
    }
    out << "\n";
  }
}

inline std::vector<TrainingExample> load_training_data(const std::vector<std::string>& dirs, const BodyModel& model) {
  std::vector<TrainingExample> data;
  for (const auto& d : dirs) {
    const DuetFiles f{d};
    require_file(f.leader_motion(), "--data");
    require_file(f.follower_motion(), "--data");
    require_file(f.music(), "--data");
    data.push_back(make_example(read_motion(f.leader_motion().string()), read_motion(f.follower_motion().string()),
                                load_music_features(f.music().string()), model));
    if (data.back().music.data.rows() != data.back().leader.data.rows()) {
      throw DataError(f.music().string() + ": frame count differs from the motion");
    }
  }
  return data;
}

}  // namespace cli_detail

/// Parses `argv` and runs one subcommand. Returns the process exit code:
/// 0 success, 1 configuration error, 2 data error, 3 numerical failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using namespace cli_detail;

  CLI::App app{"interdance: reactive and duet dance generation with interaction-aware diffusion", "interdance"};
  app.require_subcommand(1);
  std::string model_path;
  app.add_option("--body-model", model_path, "body model JSON (default: bundled model)")->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a procedural duet");
  ScenarioSpec scenario;
  std::string synth_out;
  synth->add_option("--scenario", scenario.name, "orbit | mirror | handhold | approach-touch | walk")
      ->check(CLI::IsMember(scenario_names()));
  synth->add_option("--seed", scenario.seed);
  synth->add_option("--duration", scenario.duration, "seconds");
  synth->add_option("--bpm", scenario.bpm);
  synth->add_option("--fps", scenario.fps);
  synth->add_option("--touch-depth", scenario.touch_depth, "approach-touch penetration depth, m");
  synth->add_option("--out", synth_out, "output duet directory")->required();

  // encode
  auto* enc = app.add_subcommand("encode", "encode a duet directory's motions to the representation");
  std::string enc_dir;
  enc->add_option("--dir", enc_dir, "duet directory")->required()->check(CLI::ExistingDirectory);

  // decode
  auto* dec = app.add_subcommand("decode", "decode representations and report the round-trip error");
  std::string dec_dir;
  std::string dec_report;
  dec->add_option("--dir", dec_dir, "duet directory")->required()->check(CLI::ExistingDirectory);
  dec->add_option("--report", dec_report, "also write the report here (JSON)");

  // train
  auto* tr = app.add_subcommand("train", "train the denoiser on duet directories");
  std::vector<std::string> train_dirs;
  std::string train_out;
  std::string train_init;
  TrainConfig tc;
  DenoiserConfig dc;
  std::string mode_name = "reactive";
  tr->add_option("--data", train_dirs, "duet directories")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", train_out, "checkpoint path (.idc)")->required();
  tr->add_option("--init", train_init, "start from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--seed", tc.seed);
  tr->add_option("--epochs", tc.epochs);
  tr->add_option("--batch-size", tc.batch_size);
  tr->add_option("--lr", tc.optimizer.lr);
  tr->add_option("--weight-decay", tc.optimizer.weight_decay);
  tr->add_option("--lambda-vel", tc.weights.vel);
  tr->add_option("--lambda-acc", tc.weights.acc);
  tr->add_option("--lambda-foot", tc.weights.foot);
  tr->add_option("--lambda-dm", tc.weights.dm);
  tr->add_option("--lambda-ro", tc.weights.ro);
  tr->add_option("--lambda-con", tc.weights.con);
  tr->add_option("--diffusion-steps", tc.schedule.steps);
  tr->add_option("--beta-start", tc.schedule.beta_start);
  tr->add_option("--beta-end", tc.schedule.beta_end);
  tr->add_option("--mode", mode_name, "reactive | duet")->check(CLI::IsMember({"reactive", "duet"}));
  tr->add_option("--width", dc.width);
  tr->add_option("--blocks", dc.blocks);
  tr->add_option("--heads", dc.heads);
  tr->add_option("--ff-width", dc.ff_width);
  tr->add_option("--attention-window", dc.attention_window, "0: full attention");

  // sample
  auto* sm = app.add_subcommand("sample", "generate a follower (or a full duet) with guided sampling");
  std::string sm_ckpt;
  std::string sm_leader;
  std::string sm_music;
  std::string sm_out = "sample_out";
  std::string sm_trace;
  std::string sm_mode = "reactive";
  std::uint64_t sm_seed = 0;
  GuidanceConfig gc;
  int sm_frames = 0;
  sm->add_option("--checkpoint", sm_ckpt, "trained checkpoint (default: untrained model, seed 0)")
      ->check(CLI::ExistingFile);
  sm->add_option("--leader", sm_leader, "duet directory supplying the leader and music (default: synthetic handhold)")
      ->check(CLI::ExistingDirectory);
  sm->add_option("--music", sm_music, "music features (.idf or .csv) overriding the leader directory's")
      ->check(CLI::ExistingFile);
  sm->add_option("--frames", sm_frames, "truncate to this many frames");
  sm->add_option("--out", sm_out, "output duet directory");
  sm->add_option("--mode", sm_mode, "reactive | duet")->check(CLI::IsMember({"reactive", "duet"}));
  sm->add_option("--seed", sm_seed);
  sm->add_option("--a-con", gc.a_con, "contact guidance scale");
  sm->add_option("--a-pene", gc.a_pene, "penetration guidance scale");
  sm->add_option("--guidance-first-step", gc.first_step);
  sm->add_option("--guidance-last-step", gc.last_step);
  sm->add_option("--max-update-norm", gc.max_update_norm, "per-frame clip, m");
  sm->add_option("--guidance-iterations", gc.iterations);
  sm->add_option("--trace", sm_trace, "write a per-step guidance trace here");

  // eval
  auto* ev = app.add_subcommand("eval", "score generated duets against reference duets");
  std::vector<std::string> ev_ref;
  std::vector<std::string> ev_gen;
  std::string ev_json;
  RhythmConfig rc;
  ev->add_option("--reference", ev_ref, "reference duet directories")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--generated", ev_gen, "generated duet directories")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--sigma", rc.sigma, "beat kernel width, s");
  ev->add_option("--smoothing", rc.smoothing, "speed-curve moving-average window, frames");
  ev->add_option("--json", ev_json, "also write the report here");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference checks of every analytic gradient");
  GradcheckOptions gopt;
  gc_cmd->add_option("--configs", gopt.configurations);
  gc_cmd->add_option("--seed", gopt.seed);

  // export-csv
  auto* ex = app.add_subcommand("export-csv", "write decoded joint positions as frame,joint,x,y,z");
  std::string ex_in;
  std::string ex_out;
  ex->add_option("--in", ex_in, ".idm or .idr file")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "CSV path")->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }
    const BodyModel model = load_model(model_path);
    RunConfig rc_out;
    rc_out.subcommand = app.get_subcommands().front()->get_name();
    if (!model_path.empty()) rc_out.inputs["body_model"] = model_path;

    if (*synth) {
      const DuetSample d = synth_duet(scenario, model);
      const DuetFiles f{synth_out};
      make_dir(f.dir, "--out");
      write_motion(f.leader_motion().string(), d.leader);
      write_motion(f.follower_motion().string(), d.follower);
      write_music(f.music().string(), d.music);
      rc_out.seed = scenario.seed;
      nlohmann::json windows = nlohmann::json::array();
      for (const auto& w : d.contact) windows.push_back({w.begin, w.end});
      rc_out.options = {{"scenario", scenario.name}, {"duration", scenario.duration}, {"bpm", scenario.bpm},
                        {"fps", scenario.fps},       {"touch_depth", scenario.touch_depth},
                        {"contact_windows", windows}};
      rc_out.outputs = {{"leader", "leader.idm"}, {"follower", "follower.idm"}, {"music", "music.idf"}};
      write_json(f.run(), to_json(rc_out));
      out << "synth: " << scenario.name << " " << d.leader.frame_count() << " frames -> " << synth_out << "\n";
    } else if (*enc) {
      const DuetFiles f{enc_dir};
      require_file(f.leader_motion(), "--dir");
      require_file(f.follower_motion(), "--dir");
      const RealizedMotion l = realize_motion(model, read_motion(f.leader_motion().string()));
      const RealizedMotion fo = realize_motion(model, read_motion(f.follower_motion().string()));
      write_rep(f.leader_rep().string(), encode_realized(l, fo, model));
      write_rep(f.follower_rep().string(), encode_realized(fo, l, model));
      rc_out.inputs.update({{"leader", "leader.idm"}, {"follower", "follower.idm"}});
      rc_out.outputs = {{"leader", "leader.idr"}, {"follower", "follower.idr"}};
      write_json(f.dir / "encode.run.json", to_json(rc_out));
      out << "encode: " << l.frame_count() << " frames, " << layout::channels << " channels -> " << enc_dir << "\n";
    } else if (*dec) {
      const DuetFiles f{dec_dir};
      require_file(f.leader_rep(), "--dir");
      require_file(f.follower_rep(), "--dir");
      nlohmann::json report{{"frames", 0}};
      double worst = 0.0;
      for (const char* who : {"leader", "follower"}) {
        const bool lead = std::string(who) == "leader";
        const PointSequence decoded = decode(read_rep((lead ? f.leader_rep() : f.follower_rep()).string()), model);
        report["frames"] = decoded.size();
        const fs::path motion = lead ? f.leader_motion() : f.follower_motion();
        if (fs::is_regular_file(motion)) {
          const double e = max_point_error(decoded, realize_motion(model, read_motion(motion.string())).frames);
          report[std::string(who) + "_max_error_m"] = e;
          worst = std::max(worst, e);
        }
      }
      report["max_error_m"] = worst;
      rc_out.inputs.update({{"leader", "leader.idr"}, {"follower", "follower.idr"}});
      report["run"] = to_json(rc_out);
      if (!dec_report.empty()) write_json(dec_report, report);
      out << report.dump(2) << "\n";
    } else if (*tr) {
      dc.mode = parse_mode(mode_name);
      dc.seed = tc.seed;
      const std::vector<TrainingExample> data = load_training_data(train_dirs, model);
      ParameterSet params;
      if (!train_init.empty()) {
        LoadedCheckpoint ck = load_checkpoint(train_init);
        dc = ck.config;
        params = std::move(ck.params);
      } else {
        validate(dc);
        params = init_for_training(dc, data);
      }
      const TrainResult result = train(data, std::move(params), dc, tc, model, [&](const EpochLog& e) {
        out << to_json(e).dump() << "\n";
      });
      rc_out.seed = tc.seed;
      rc_out.inputs["data"] = train_dirs;
      if (!train_init.empty()) rc_out.inputs["init"] = train_init;
      rc_out.outputs["checkpoint"] = train_out;
      rc_out.denoiser = to_json(dc);
      rc_out.schedule = to_json(tc)["schedule"];
      rc_out.options = {{"train", to_json(tc)}};
      if (const fs::path parent = fs::path(train_out).parent_path(); !parent.empty()) make_dir(parent, "--out");
      save_checkpoint(train_out, result.params, dc, to_json(rc_out));
      out << "train: " << tc.epochs << " epochs on " << data.size() << " duets -> " << train_out << "\n";
    } else if (*sm) {
      LoadedCheckpoint ck;
      ScheduleConfig sc;
      if (!sm_ckpt.empty()) {
        ck = load_checkpoint(sm_ckpt);
        if (ck.run.contains("schedule")) {
          sc.steps = ck.run["schedule"].value("steps", sc.steps);
          sc.beta_start = ck.run["schedule"].value("beta_start", sc.beta_start);
          sc.beta_end = ck.run["schedule"].value("beta_end", sc.beta_end);
        }
      } else {
        ck.config.mode = parse_mode(sm_mode);
        ck.params = init_parameters(ck.config);
        err << "sample: no --checkpoint, using an untrained denoiser\n";
      }
      const DenoiserMode mode = parse_mode(sm_mode);
      if (mode == DenoiserMode::duet && ck.config.mode != DenoiserMode::duet) {
        throw ConfigError("--mode duet: checkpoint was trained in reactive mode");
      }
      ck.config.mode = mode;
      MotionSequence leader_motion;
      MusicFeatures music;
      if (!sm_leader.empty()) {
        const DuetFiles f{sm_leader};
        require_file(f.leader_motion(), "--leader");
        require_file(f.music(), "--leader");
        leader_motion = read_motion(f.leader_motion().string());
        music = load_music_features(f.music().string());
        rc_out.inputs["leader"] = (f.leader_motion()).string();
      } else {
        ScenarioSpec s;
        s.seed = sm_seed;
        s.duration = 2.0;
        const DuetSample d = synth_duet(s, model);
        leader_motion = d.leader;
        music = d.music;
        rc_out.inputs["leader"] = "synth:handhold";
      }
      if (!sm_music.empty()) {
        music = load_music_features(sm_music);
        rc_out.inputs["music"] = sm_music;
      }
      const int frames = std::min(leader_motion.frame_count(), static_cast<int>(music.data.rows()));
      const int t_count = sm_frames > 0 ? std::min(sm_frames, frames) : frames;
      if (t_count < 2) throw DataError("sample: need at least 2 frames");
      leader_motion.frames.resize(static_cast<std::size_t>(t_count));
      music.data.conservativeResize(t_count, Eigen::NoChange);
      if (t_count > ck.config.max_frames) throw ConfigError("--frames: exceeds the model's max_frames");
      const RealizedMotion lr = realize_motion(model, leader_motion);
      // person-contact labels against the partner are unknown at inference
      RepSequence leader_rep = encode_realized(lr, lr, model);
      leader_rep.data.rightCols(kPointCount).setZero();
      const NoiseSchedule schedule = make_schedule(sc.steps, sc.beta_start, sc.beta_end);
      SampleResult result =
          sample(make_denoise_fn(ck.params, ck.config, music), schedule, leader_rep, model, gc, sm_seed, mode);
      binarize_contacts(result.follower);
      if (mode == DenoiserMode::duet) binarize_contacts(result.leader);
      const DuetFiles f{sm_out};
      make_dir(f.dir, "--out");
      write_rep(f.follower_rep().string(), result.follower);
      write_rep(f.leader_rep().string(), result.leader);
      write_music(f.music().string(), music);
      if (mode == DenoiserMode::reactive) write_motion(f.leader_motion().string(), leader_motion);
      if (!sm_trace.empty()) write_trace(sm_trace, result.trace);
      rc_out.seed = sm_seed;
      if (!sm_ckpt.empty()) rc_out.inputs["checkpoint"] = sm_ckpt;
      rc_out.denoiser = to_json(ck.config);
      rc_out.schedule = {{"steps", sc.steps}, {"beta_start", sc.beta_start}, {"beta_end", sc.beta_end}};
      rc_out.guidance = to_json(gc);
      rc_out.options = {{"mode", to_string(mode)}, {"frames", t_count}};
      rc_out.outputs = {{"leader", "leader.idr"}, {"follower", "follower.idr"}, {"music", "music.idf"}};
      write_json(f.run(), to_json(rc_out));
      out << "sample: " << to_string(mode) << " " << t_count << " frames -> " << sm_out << "\n";
    } else if (*ev) {
      std::vector<EvalDuet> ref;
      std::vector<EvalDuet> gen;
      for (const auto& d : ev_ref) ref.push_back(load_eval_duet(d, model, "--reference"));
      for (const auto& d : ev_gen) gen.push_back(load_eval_duet(d, model, "--generated"));
      const MetricsReport report = evaluate(ref, gen, model, rc);
      print_key_values(out, report);
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
      if (!ev_json.empty()) {
        rc_out.inputs = {{"reference", ev_ref}, {"generated", ev_gen}};
        rc_out.metrics = {{"sigma", rc.sigma}, {"smoothing", rc.smoothing}};
        nlohmann::json doc = to_json(report);
        doc["run"] = to_json(rc_out);
        write_json(ev_json, doc);
      }
    } else if (*gc_cmd) {
      bool ok = true;
      for (const auto& r : run_all_gradchecks(model, gopt)) {
        out << (r.passed() ? "PASS " : "FAIL ") << r.name << " configs=" << r.configurations
            << " coords=" << r.coordinates << " skipped=" << r.skipped << " max_rel_error=" << r.max_rel_error
            << " tol=" << r.tolerance << "\n";
        ok = ok && r.passed();
      }
      if (!ok) throw NumericalError("gradcheck: at least one suite failed");
    } else if (*ex) {
      PointSequence frames;
      const std::string ext = fs::path(ex_in).extension().string();
      if (ext == ".idr") {
        frames = decode(read_rep(ex_in), model);
      } else if (ext == ".idm") {
        frames = realize_motion(model, read_motion(ex_in)).frames;
      } else {
        throw ConfigError("--in: expected a .idm or .idr file, got " + ex_in);
      }
      std::ofstream csv(ex_out);
      if (!csv) throw DataError(ex_out + ": cannot open for writing");
      csv << std::setprecision(9) << "frame,joint,x,y,z\n";
      for (std::size_t t = 0; t < frames.size(); ++t) {
        for (int j = 0; j < kJointCount; ++j) {
          const Vec3& p = frames[t].joints[static_cast<std::size_t>(j)];
          csv << t << "," << j << "," << p.x() << "," << p.y() << "," << p.z() << "\n";
        }
      }
      rc_out.inputs["motion"] = ex_in;
      rc_out.outputs["csv"] = ex_out;
      write_json(ex_out + ".run.json", to_json(rc_out));
      out << "export-csv: " << frames.size() << " frames -> " << ex_out << "\n";
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::data);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::config);
  }
}

}  // namespace interdance
