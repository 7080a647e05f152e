#include "cvmcl/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <numeric>

#include "cvmcl/io.hpp"
#include "cvmcl/parallel.hpp"
#include "cvmcl/training.hpp"

namespace cvmcl::pipeline {

using nlohmann::json;

std::vector<sim::GroundObservation> render_views(const geo::GeoRaster& world, const sim::Trajectory& trajectory,
                                                 const sim::GroundViewSpec& spec) {
  std::vector<sim::GroundObservation> views(trajectory.size());
  parallel_for(trajectory.size(),
               [&](std::size_t i) { views[i] = sim::render_ground_view(world, trajectory[i].truth, spec); });
  return views;
}

void fit_input_stats(embed::SiameseModel& model, std::span<const sim::GroundObservation> views,
                     const geo::GeoRaster& raster) {
  embed::StatsAccumulator g(model.config.ground.channels);
  for (const auto& v : views) {
    g.add(v.data);
  }
  embed::StatsAccumulator s(model.config.sat.channels);
  s.add(raster.pixels());
  model.ground_stats = g.finish();
  model.sat_stats = s.finish();
}

std::vector<std::vector<double>> embed_views(const embed::SiameseModel& model,
                                             std::span<const sim::GroundObservation> views) {
  std::vector<std::vector<double>> out(views.size());
  parallel_for(views.size(), [&](std::size_t i) { out[i] = model.embed_ground(views[i].data); });
  return out;
}

std::vector<std::vector<double>> oracle_embeddings(const sim::Trajectory& trajectory, double heading_scale) {
  std::vector<std::vector<double>> out;
  out.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    out.push_back(match::pose_features(s.truth, heading_scale));
  }
  return out;
}

filter::RoadMask road_mask(const geo::GeoRaster& world, const sim::Trajectory& trajectory, const geo::Rect& region,
                           double half_width, std::size_t n_distractors, std::uint64_t seed) {
  filter::RoadMask mask = filter::RoadMask::like(world);
  std::vector<geo::Vec2> path;
  path.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    path.push_back(s.truth.position());
  }
  mask.paint_polyline(path, half_width);

  Rng rng = make_rng(seed, 0x726f6164);  // "road"
  std::uniform_real_distribution<double> ux(region.xmin, region.xmax);
  std::uniform_real_distribution<double> uy(region.ymin, region.ymax);
  std::uniform_real_distribution<double> ua(0.0, std::numbers::pi);
  const double reach = std::hypot(region.width(), region.height());
  for (std::size_t k = 0; k < n_distractors; ++k) {
    const geo::Vec2 c{ux(rng), uy(rng)};
    const double a = ua(rng);
    const std::array<geo::Vec2, 2> line{geo::Vec2{c.x - reach * std::cos(a), c.y - reach * std::sin(a)},
                                        geo::Vec2{c.x + reach * std::cos(a), c.y + reach * std::sin(a)}};
    mask.paint_polyline(line, half_width);
  }
  return mask;
}

double resolve_alpha(const FilterSettings& settings, const match::EmbeddingIndex& index,
                     std::span<const std::vector<double>> queries) {
  if (settings.alpha > 0.0) {
    return settings.alpha;
  }
  return settings.alpha_scale * filter::calibrate_alpha(index, queries);
}

Scenario make_scenario(const RunConfig& config, int which) {
  geo::GeoRaster world = sim::generate_world(config.world_spec(which));
  const bool train = which == 0;
  sim::Trajectory t = sim::generate_trajectory(
      world, train ? config.train_trajectory_spec() : config.eval_trajectory_spec(),
      train ? config.eval.train_region : config.eval.eval_region);
  return {std::move(world), std::move(t)};
}

MiningOutput mine_training_pairs(const RunConfig& config, const geo::GeoRaster& world,
                                 const sim::Trajectory& trajectory) {
  std::vector<geo::Pose2D> poses(trajectory.size());
  std::transform(trajectory.begin(), trajectory.end(), poses.begin(), [](const auto& s) { return s.truth; });
  const auto n_val = static_cast<std::size_t>(std::llround(config.train.val_fraction * static_cast<double>(poses.size())));
  const std::size_t n_train = poses.size() - n_val;
  const std::vector<geo::Pose2D> grid = config.grid.over(config.eval.train_region).poses();
  const auto& th = config.grid.thresholds;
  const double ratio = config.train.config.neg_per_pos;

  MiningOutput out;
  embed::MiningResult tr = embed::mine_pairs(std::span(poses).first(n_train), world, grid, config.crop, th, ratio,
                                             config.mining_seed());
  out.train = tr.pairs;
  out.stats = tr;
  if (n_val > 0) {
    embed::MiningResult va = embed::mine_pairs(std::span(poses).subspan(n_train), world, grid, config.crop, th, ratio,
                                               mix_seed(config.mining_seed(), 1));
    for (auto& p : va.pairs) {
      p.ground_index += n_train;
    }
    out.validation = std::move(va.pairs);
    out.stats.positives += va.positives;
    out.stats.negatives += va.negatives;
    out.stats.skipped_no_positive += va.skipped_no_positive;
  }
  return out;
}

TrainingOutput train_model(const RunConfig& config, const geo::GeoRaster& world, const sim::Trajectory& trajectory,
                           const MiningOutput& pairs, const Log& log) {
  const std::vector<sim::GroundObservation> views = render_views(world, trajectory, config.ground_spec());
  embed::SiameseModel model = embed::SiameseModel::create(config.encoder_config());
  const auto n_train = static_cast<std::size_t>(
      views.size() - std::llround(config.train.val_fraction * static_cast<double>(views.size())));
  fit_input_stats(model, std::span(views).first(n_train), world);
  embed::round_to_float(model);

  const embed::MinedPairSource train_src(views, world, config.crop, pairs.train);
  const embed::MinedPairSource val_src(views, world, config.crop, pairs.validation);
  embed::EpochCallback cb;
  if (log) {
    cb = [&](std::size_t epoch, double train_loss, double val_loss) {
      log("epoch " + std::to_string(epoch) + " train_loss " + io::format_double(train_loss) + " val_loss " +
          io::format_double(val_loss));
    };
  }
  TrainingOutput out{model, model, {}};
  out.result = embed::train(train_src, model, config.train_config(), pairs.validation.empty() ? nullptr : &val_src, cb);
  out.model = out.result.model;
  embed::round_to_float(out.model);
  return out;
}

RetrievalEval evaluate_retrieval(const match::EmbeddingIndex& index, std::span<const std::vector<double>> queries,
                                 const sim::Trajectory& truth, const RunConfig& config) {
  if (queries.size() != truth.size()) {
    throw InvalidArgument("evaluate_retrieval: query and truth counts differ");
  }
  std::vector<match::RetrievalQuery> q(queries.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = {queries[i], truth[i].truth};
  }
  RetrievalEval r;
  const auto scored = match::score_all_pairs(index, q, config.grid.thresholds);
  r.pr = match::pr_curve(scored);
  r.topx = match::topx_retrieval(index, q, config.grid.thresholds, config.eval.topx);
  r.n_queries = q.size();
  r.n_scored_pairs = scored.size();
  return r;
}

LocalizationRun localize_once(const RunConfig& config, const Scenario& scenario,
                              std::span<const std::vector<double>> ground_embeddings,
                              const filter::DistanceProvider& provider, double alpha, std::size_t run,
                              const filter::StepObserver& observer) {
  const filter::RoadMask mask = road_mask(scenario.world, scenario.trajectory, config.eval.eval_region,
                                          config.filter.road_half_width, config.filter.n_distractor_roads,
                                          config.road_seed());
  filter::FilterConfig fc = config.filter_config(run);
  fc.alpha = alpha;
  LocalizationRun out;
  out.alpha = alpha;
  out.summary = filter::run_localization(scenario.trajectory, ground_embeddings, provider, config.eval.eval_region,
                                         &mask, fc, config.trajectory.dt, observer);
  return out;
}

json run_summary_json(const LocalizationRun& run, const RunConfig& config) {
  const auto& s = run.summary;
  json j{{"alpha", run.alpha},
         {"steps", s.trace.size()},
         {"converged", s.final_converged},
         {"final_mean_error_m", s.final_error.mean},
         {"final_std_m", s.final_error.stddev},
         {"final_estimate_error_m", s.trace.back().err_m},
         {"mask_fallbacks", s.events.mask_fallbacks},
         {"weight_resets", s.events.weight_resets}};
  j["convergence_step"] = s.convergence_step ? json(*s.convergence_step) : json(nullptr);
  j["within_2_grid"] = s.final_error.mean < 2.0 * config.grid.spacing;
  return j;
}

std::string config_hash(const RunConfig& config) {
  const std::string ini = to_ini(config);
  return io::hex32(io::crc32(std::span(reinterpret_cast<const std::uint8_t*>(ini.data()), ini.size())));
}

void write_resolved_config(const RunConfig& config, const fs::path& dir, const std::string& stage) {
  io::write_atomic(dir / ("config." + stage + ".ini"), to_ini(config));
}

namespace {

json base_report(const RunConfig& config, const std::string& stage) {
  return {{"schema_version", io::kReportSchemaVersion}, {"stage", stage}, {"config_hash", config_hash(config)}};
}

struct LoadedModel {
  embed::SiameseModel model;
  std::uint32_t fingerprint = 0;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m;
  m.model = io::load_checkpoint(path, &m.fingerprint);
  return m;
}

match::EmbeddingIndex load_matching_index(const fs::path& path, std::uint32_t fingerprint, const fs::path& model) {
  match::EmbeddingIndex index = io::load_index(path);
  if (index.fingerprint() != fingerprint) {
    throw Error("fingerprint mismatch: index " + path.filename().string() + " was built by model " +
                io::hex32(index.fingerprint()) + " but " + model.filename().string() + " is " +
                io::hex32(fingerprint) + "; rebuild the index with `cvmcl index`");
  }
  return index;
}

json retrieval_json(const RetrievalEval& r) {
  json topx = json::array();
  for (std::size_t i = 0; i < r.topx.x_percent.size(); ++i) {
    topx.push_back({{"x_percent", r.topx.x_percent[i]}, {"fraction", r.topx.fraction[i]}});
  }
  return {{"average_precision", r.pr.average_precision},
          {"topx", topx},
          {"queries", r.n_queries},
          {"queries_evaluated", r.topx.evaluated},
          {"queries_without_positive", r.topx.excluded_no_positive},
          {"scored_pairs", r.n_scored_pairs}};
}

void write_retrieval_csv(const fs::path& dir, const std::string& name, const RetrievalEval& r) {
  // Only the points where recall changes: enough to draw the curve.
  std::string pr = "threshold,precision,recall\n";
  double last_recall = -1.0;
  for (const auto& p : r.pr.points) {
    if (p.recall != last_recall) {
      pr += io::format_double(p.threshold) + "," + io::format_double(p.precision) + "," +
            io::format_double(p.recall) + "\n";
      last_recall = p.recall;
    }
  }
  io::write_atomic(dir / ("pr_" + name + ".csv"), pr);
  std::string tx = "x_percent,fraction\n";
  for (std::size_t i = 0; i < r.topx.x_percent.size(); ++i) {
    tx += io::format_double(r.topx.x_percent[i]) + "," + io::format_double(r.topx.fraction[i]) + "\n";
  }
  io::write_atomic(dir / ("topx_" + name + ".csv"), tx);
}

Scenario load_scenario(const fs::path& dir, int which) {
  const bool train = which == 0;
  return {io::load_raster(dir / (train ? files::kTrainWorld : files::kEvalWorld)),
          io::load_trajectory(dir / (train ? files::kTrainTrajectory : files::kEvalTrajectory))};
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void stage_simgen(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  for (int which : {0, 1}) {
    const Scenario s = make_scenario(config, which);
    io::save_raster(dir / (which == 0 ? files::kTrainWorld : files::kEvalWorld), s.world);
    io::save_trajectory(dir / (which == 0 ? files::kTrainTrajectory : files::kEvalTrajectory), s.trajectory);
  }
  write_resolved_config(config, dir, "simgen");
}

json stage_mine(const RunConfig& config, const fs::path& dir) {
  const Scenario s = load_scenario(dir, 0);
  const MiningOutput m = mine_training_pairs(config, s.world, s.trajectory);
  io::save_pairs(dir / files::kTrainPairs, m.train);
  io::save_pairs(dir / files::kValPairs, m.validation);
  write_resolved_config(config, dir, "mine");
  json j = base_report(config, "mine");
  j["train_pairs"] = m.train.size();
  j["validation_pairs"] = m.validation.size();
  j["positives"] = m.stats.positives;
  j["negatives"] = m.stats.negatives;
  j["skipped_no_positive"] = m.stats.skipped_no_positive;
  return j;
}

json stage_train(const RunConfig& config, const fs::path& dir, const Log& log) {
  const Scenario s = load_scenario(dir, 0);
  MiningOutput pairs;
  pairs.train = io::load_pairs(dir / files::kTrainPairs);
  pairs.validation = io::load_pairs(dir / files::kValPairs);
  const TrainingOutput t = train_model(config, s.world, s.trajectory, pairs, log);
  const std::uint32_t fp = io::save_checkpoint(dir / files::kModel, t.model);
  const std::uint32_t fp_control = io::save_checkpoint(dir / files::kControlModel, t.control);

  std::string csv = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < t.result.epoch_loss.size(); ++e) {
    csv += std::to_string(e) + "," + io::format_double(t.result.epoch_loss[e]) + "," +
           (e < t.result.val_loss.size() ? io::format_double(t.result.val_loss[e]) : std::string()) + "\n";
  }
  io::write_atomic(dir / files::kTrainLog, csv);
  write_resolved_config(config, dir, "train");

  json j = base_report(config, "train");
  j["model_fingerprint"] = io::hex32(fp);
  j["control_fingerprint"] = io::hex32(fp_control);
  j["best_epoch"] = t.result.best_epoch;
  j["epochs"] = t.result.epoch_loss.size();
  j["optimizer_steps"] = t.result.step_loss.size();
  if (!t.result.epoch_loss.empty()) {
    j["final_train_loss"] = t.result.epoch_loss.back();
  }
  if (!t.result.val_loss.empty()) {
    j["best_val_loss"] = t.result.val_loss[t.result.best_epoch];
  }
  return j;
}

json stage_index(const RunConfig& config, const fs::path& dir) {
  const LoadedModel model = load_model(dir / files::kModel);
  const LoadedModel control = load_model(dir / files::kControlModel);
  const geo::GeoRaster eval_world = io::load_raster(dir / files::kEvalWorld);
  const geo::GeoRaster train_world = io::load_raster(dir / files::kTrainWorld);
  const match::PoseGrid eval_grid = config.grid.over(config.eval.eval_region);
  const match::PoseGrid probe_grid = config.grid.over(config.eval.train_probe_region);

  const auto ix = match::build_index(model.model, eval_world, eval_grid, config.crop, model.fingerprint);
  io::save_index(dir / files::kEvalIndex, ix);
  const auto cx = match::build_index(control.model, eval_world, eval_grid, config.crop, control.fingerprint);
  io::save_index(dir / files::kControlIndex, cx);
  const auto px = match::build_index(model.model, train_world, probe_grid, config.crop, model.fingerprint);
  io::save_index(dir / files::kProbeIndex, px);
  write_resolved_config(config, dir, "index");

  json j = base_report(config, "index");
  j["eval_entries"] = ix.size();
  j["probe_entries"] = px.size();
  j["model_fingerprint"] = io::hex32(model.fingerprint);
  j["control_fingerprint"] = io::hex32(control.fingerprint);
  return j;
}

json stage_eval_retrieval(const RunConfig& config, const fs::path& dir) {
  const LoadedModel model = load_model(dir / files::kModel);
  const LoadedModel control = load_model(dir / files::kControlModel);
  const Scenario eval = load_scenario(dir, 1);
  const Scenario train = load_scenario(dir, 0);
  const sim::GroundViewSpec gs = config.ground_spec();

  json j = base_report(config, "eval-retrieval");
  const auto views = render_views(eval.world, eval.trajectory, gs);
  {
    const auto index = load_matching_index(dir / files::kEvalIndex, model.fingerprint, files::kModel);
    const RetrievalEval r = evaluate_retrieval(index, embed_views(model.model, views), eval.trajectory, config);
    j["eval"] = retrieval_json(r);
    write_retrieval_csv(dir, "eval", r);
  }
  {
    const auto index = load_matching_index(dir / files::kControlIndex, control.fingerprint, files::kControlModel);
    const RetrievalEval r = evaluate_retrieval(index, embed_views(control.model, views), eval.trajectory, config);
    j["control"] = retrieval_json(r);
    write_retrieval_csv(dir, "control", r);
  }
  {
    // Training-trajectory queries that fall inside the probe region.
    sim::Trajectory inside;
    for (const auto& s : train.trajectory) {
      if (config.eval.train_probe_region.contains(s.truth.position())) {
        inside.push_back(s);
      }
    }
    if (!inside.empty()) {
      const auto index = load_matching_index(dir / files::kProbeIndex, model.fingerprint, files::kModel);
      const auto probe_views = render_views(train.world, inside, gs);
      const RetrievalEval r = evaluate_retrieval(index, embed_views(model.model, probe_views), inside, config);
      j["train_probe"] = retrieval_json(r);
      write_retrieval_csv(dir, "train_probe", r);
    }
  }
  write_resolved_config(config, dir, "eval-retrieval");
  return j;
}

Provider parse_provider(const std::string& name) {
  if (name == "oracle") {
    return Provider::Oracle;
  }
  if (name == "model") {
    return Provider::Model;
  }
  if (name == "index") {
    return Provider::Index;
  }
  throw InvalidArgument("unknown provider \"" + name + "\" (expected oracle, model or index)");
}

std::string provider_name(Provider p) {
  switch (p) {
    case Provider::Oracle:
      return "oracle";
    case Provider::Model:
      return "model";
    case Provider::Index:
      return "index";
  }
  return "?";
}

json stage_localize(const RunConfig& config, const fs::path& dir, const LocalizeOptions& options) {
  if (options.seeds == 0) {
    throw InvalidArgument("--seeds must be >= 1");
  }
  const Scenario scenario = load_scenario(dir, 1);
  const match::PoseGrid grid = config.grid.over(config.eval.eval_region);

  std::vector<std::vector<double>> embeddings;
  std::unique_ptr<filter::DistanceProvider> provider;
  std::optional<LoadedModel> model;
  std::optional<match::EmbeddingIndex> index;
  double alpha = 0.0;

  if (options.provider == Provider::Oracle) {
    const double hs = config.filter.oracle_heading_scale;
    embeddings = oracle_embeddings(scenario.trajectory, hs);
    provider = std::make_unique<filter::OnTheFlyProvider>(match::pose_feature_embedder(hs));
    alpha = resolve_alpha(config.filter, match::build_index(match::pose_feature_embedder(hs), grid, 0), embeddings);
  } else {
    const fs::path model_path = options.model.value_or(dir / files::kModel);
    const fs::path index_path = options.index.value_or(dir / files::kEvalIndex);
    model = load_model(model_path);
    index = load_matching_index(index_path, model->fingerprint, model_path);
    embeddings = embed_views(model->model, render_views(scenario.world, scenario.trajectory, config.ground_spec()));
    alpha = resolve_alpha(config.filter, *index, embeddings);
    if (options.provider == Provider::Index) {
      provider = std::make_unique<filter::IndexProvider>(*index, grid);
    } else {
      provider = std::make_unique<filter::OnTheFlyProvider>(
          match::model_sat_embedder(model->model, scenario.world, config.crop));
    }
  }

  const std::string name = "localize_" + provider_name(options.provider) + (options.tag.empty() ? "" : "_" + options.tag);
  const fs::path out_dir = dir / name;
  std::vector<LocalizationRun> runs(options.seeds);
  parallel_for(options.seeds, [&](std::size_t k) {
    const fs::path run_dir = out_dir / ("run_" + std::to_string(k));
    fs::create_directories(run_dir);
    filter::StepObserver observer;
    if (options.dump_clouds) {
      observer = [&run_dir](const filter::ParticleSet& set, const filter::StepReport& rep) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "cloud_%04zu.cvpc", rep.step);
        io::save_cloud(run_dir / buf, set);
      };
    }
    runs[k] = localize_once(config, scenario, embeddings, *provider, alpha, k, observer);
    io::save_trace(run_dir / "trace.csv", runs[k].summary.trace);
  });

  json j = base_report(config, "localize");
  j["name"] = name;
  j["provider"] = provider_name(options.provider);
  j["tag"] = options.tag;
  if (model) {
    j["model_fingerprint"] = io::hex32(model->fingerprint);
  }
  json per_run = json::array();
  std::vector<double> errs, stds, conv_steps;
  std::size_t converged = 0;
  for (const auto& r : runs) {
    per_run.push_back(run_summary_json(r, config));
    errs.push_back(r.summary.final_error.mean);
    stds.push_back(r.summary.final_error.stddev);
    if (r.summary.final_converged) {
      ++converged;
    }
    if (r.summary.convergence_step) {
      conv_steps.push_back(static_cast<double>(*r.summary.convergence_step));
    }
  }
  j["runs"] = per_run;
  j["aggregate"] = {{"runs", runs.size()},
                    {"converged_runs", converged},
                    {"final_mean_error_m", {{"mean", mean_of(errs)}, {"std", std_of(errs)}}},
                    {"final_std_m", {{"mean", mean_of(stds)}, {"std", std_of(stds)}}},
                    {"convergence_step", {{"mean", mean_of(conv_steps)}, {"std", std_of(conv_steps)},
                                          {"runs_reaching", conv_steps.size()}}}};
  write_resolved_config(config, dir, name);
  return j;
}

json stage_report(const RunConfig& config, const fs::path& dir) {
  json j = base_report(config, "report");
  if (fs::exists(dir / files::kRetrieval)) {
    const json r = io::load_report(dir / files::kRetrieval);
    json retrieval;
    for (const char* key : {"eval", "control", "train_probe"}) {
      if (r.contains(key)) {
        retrieval[key] = r[key];
      }
    }
    j["retrieval"] = retrieval;
  }
  std::vector<fs::path> loc;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (e.is_regular_file() && n.starts_with("localize_") && n.ends_with(".json")) {
      loc.push_back(e.path());
    }
  }
  std::sort(loc.begin(), loc.end());
  json table = json::object();
  for (const auto& p : loc) {
    const json l = io::load_report(p);
    table[l.at("name").get<std::string>()] = l.at("aggregate");
  }
  j["localization"] = table;
  write_resolved_config(config, dir, "report");
  return j;
}

}  // namespace cvmcl::pipeline
