#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvmcl/filter.hpp"
#include "cvmcl/match.hpp"
#include "cvmcl/run_config.hpp"
#include "cvmcl/siamese.hpp"
#include "cvmcl/sim.hpp"

namespace cvmcl::pipeline {

namespace fs = std::filesystem;

/// File names inside a run directory.
namespace files {
inline constexpr const char* kTrainWorld = "train_world.cvrt";
inline constexpr const char* kEvalWorld = "eval_world.cvrt";
inline constexpr const char* kTrainTrajectory = "train_traj.csv";
inline constexpr const char* kEvalTrajectory = "eval_traj.csv";
inline constexpr const char* kTrainPairs = "pairs_train.csv";
inline constexpr const char* kValPairs = "pairs_val.csv";
inline constexpr const char* kModel = "model.cvsm";
inline constexpr const char* kControlModel = "control.cvsm";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kEvalIndex = "eval_index.cvix";
inline constexpr const char* kControlIndex = "eval_index_control.cvix";
inline constexpr const char* kProbeIndex = "train_index.cvix";
inline constexpr const char* kRetrieval = "retrieval.json";
inline constexpr const char* kReport = "report.json";
}  // namespace files

using Log = std::function<void(const std::string&)>;

// ---- building blocks shared by the stages and the test suites ----

std::vector<sim::GroundObservation> render_views(const geo::GeoRaster& world, const sim::Trajectory& trajectory,
                                                 const sim::GroundViewSpec& spec);

/// Ground statistics over `views`, satellite statistics over the raster
/// pixels.
void fit_input_stats(embed::SiameseModel& model, std::span<const sim::GroundObservation> views,
                     const geo::GeoRaster& raster);

std::vector<std::vector<double>> embed_views(const embed::SiameseModel& model,
                                             std::span<const sim::GroundObservation> views);

/// Oracle ground "embedding": pose features of the true pose.
std::vector<std::vector<double>> oracle_embeddings(const sim::Trajectory& trajectory, double heading_scale);

/// Roads: the driven polyline plus straight distractor roads crossing `region`.
filter::RoadMask road_mask(const geo::GeoRaster& world, const sim::Trajectory& trajectory, const geo::Rect& region,
                           double half_width, std::size_t n_distractors, std::uint64_t seed);

/// alpha from the config, or alpha_scale / median(index distance).
double resolve_alpha(const FilterSettings& settings, const match::EmbeddingIndex& index,
                     std::span<const std::vector<double>> queries);

struct Scenario {
  geo::GeoRaster world;
  sim::Trajectory trajectory;
};

/// World and trajectory for "train" (which = 0) or "eval" (which = 1).
Scenario make_scenario(const RunConfig& config, int which);

struct MiningOutput {
  std::vector<embed::MinedPair> train;
  std::vector<embed::MinedPair> validation;
  embed::MiningResult stats;
};

/// Mines pairs on the training grid; the trailing val_fraction of the
/// trajectory goes to validation.
MiningOutput mine_training_pairs(const RunConfig& config, const geo::GeoRaster& world,
                                 const sim::Trajectory& trajectory);

struct TrainingOutput {
  embed::SiameseModel model;    // trained, rounded to f32
  embed::SiameseModel control;  // same initialization, untrained
  embed::TrainResult result;
};

TrainingOutput train_model(const RunConfig& config, const geo::GeoRaster& world, const sim::Trajectory& trajectory,
                           const MiningOutput& pairs, const Log& log = {});

struct RetrievalEval {
  match::PrCurve pr;
  match::TopXResult topx;
  std::size_t n_queries = 0;
  std::size_t n_scored_pairs = 0;
};

RetrievalEval evaluate_retrieval(const match::EmbeddingIndex& index, std::span<const std::vector<double>> queries,
                                 const sim::Trajectory& truth, const RunConfig& config);

struct LocalizationRun {
  filter::RunSummary summary;
  double alpha = 0.0;
};

/// One filter run of the evaluation scenario with the given provider.
LocalizationRun localize_once(const RunConfig& config, const Scenario& scenario,
                              std::span<const std::vector<double>> ground_embeddings,
                              const filter::DistanceProvider& provider, double alpha, std::size_t run,
                              const filter::StepObserver& observer = {});

nlohmann::json run_summary_json(const LocalizationRun& run, const RunConfig& config);

// ---- CLI stages: each reads and writes files in `dir` ----

std::string config_hash(const RunConfig& config);
void write_resolved_config(const RunConfig& config, const fs::path& dir, const std::string& stage);

void stage_simgen(const RunConfig& config, const fs::path& dir);
nlohmann::json stage_mine(const RunConfig& config, const fs::path& dir);
nlohmann::json stage_train(const RunConfig& config, const fs::path& dir, const Log& log = {});
nlohmann::json stage_index(const RunConfig& config, const fs::path& dir);
nlohmann::json stage_eval_retrieval(const RunConfig& config, const fs::path& dir);

enum class Provider { Oracle, Model, Index };
Provider parse_provider(const std::string& name);
std::string provider_name(Provider p);

struct LocalizeOptions {
  Provider provider = Provider::Index;
  std::size_t seeds = 1;
  std::optional<fs::path> model;  // default <dir>/model.cvsm
  std::optional<fs::path> index;  // default <dir>/eval_index.cvix
  std::string tag;                // appended to the output name
  bool dump_clouds = false;
};

/// Writes localize_<provider>[_<tag>]/run_<k>/trace.csv and a summary json.
nlohmann::json stage_localize(const RunConfig& config, const fs::path& dir, const LocalizeOptions& options);
nlohmann::json stage_report(const RunConfig& config, const fs::path& dir);

}  // namespace cvmcl::pipeline
