#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvmcl/common.hpp"
#include "cvmcl/filter.hpp"
#include "cvmcl/geo.hpp"
#include "cvmcl/match.hpp"
#include "cvmcl/siamese.hpp"
#include "cvmcl/sim.hpp"

namespace cvmcl::io {

namespace fs = std::filesystem;

/// Malformed or corrupted file. The message names the offending field or
/// byte offset.
class FormatError : public Error {
public:
  using Error::Error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::string hex32(std::uint32_t v);

/// Writes to a sibling temp file, then renames over `path`.
void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const fs::path& path, std::string_view text);
std::vector<std::uint8_t> read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view field);

// Raster: "CVRT", u16 version, u32 width/height/channels, f32 payload,
// u32 CRC32 of everything before it. The transform goes to a companion
// world file (`path` with extension .wld): A, D, B, E, C, F one per line.
void save_raster(const fs::path& path, const geo::GeoRaster& raster);
geo::GeoRaster load_raster(const fs::path& path);
fs::path world_file_path(const fs::path& raster_path);

// Trajectory CSV: t,x,y,theta,v,omega,v_noisy,omega_noisy
void save_trajectory(const fs::path& path, const sim::Trajectory& trajectory);
sim::Trajectory load_trajectory(const fs::path& path);

// Pair manifest CSV: ground_index,sat_x,sat_y,sat_theta,label
void save_pairs(const fs::path& path, std::span<const embed::MinedPair> pairs);
std::vector<embed::MinedPair> load_pairs(const fs::path& path);

// Checkpoint: "CVSM", u16 version, u32 length + canonical JSON (architecture
// and input statistics), u32 count + f32 ground params, u32 count + f32
// satellite params, u32 CRC32. Parameters are rounded to f32.
std::vector<std::uint8_t> encode_checkpoint(const embed::SiameseModel& model);
embed::SiameseModel decode_checkpoint(std::span<const std::uint8_t> bytes);
/// Returns the fingerprint (CRC32 trailer) of the written file.
std::uint32_t save_checkpoint(const fs::path& path, const embed::SiameseModel& model);
embed::SiameseModel load_checkpoint(const fs::path& path, std::uint32_t* fingerprint = nullptr);

nlohmann::json encoder_config_to_json(const embed::EncoderConfig& config);
embed::EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Index: "CVIX", u16 version, u32 count, u32 dim, per entry 3 f64 pose and
// dim f32, u32 model fingerprint, u32 CRC32.
void save_index(const fs::path& path, const match::EmbeddingIndex& index);
match::EmbeddingIndex load_index(const fs::path& path);

// Trace CSV: step,mean_x,mean_y,mean_theta,pos_std,neff,resampled,converged,
// truth_x,truth_y,err_m
void save_trace(const fs::path& path, std::span<const filter::TraceRow> trace);
std::vector<filter::TraceRow> load_trace(const fs::path& path);

// Particle cloud: "CVPC", u16 version, u32 N, N x (x, y, theta, weight) f64,
// u32 CRC32.
void save_cloud(const fs::path& path, const filter::ParticleSet& set);
filter::ParticleSet load_cloud(const fs::path& path);

/// Report JSON with sorted keys. Requires an integer "schema_version" and
/// rejects non-finite numbers anywhere in the document.
inline constexpr int kReportSchemaVersion = 1;
std::string dump_report(const nlohmann::json& report);
void save_report(const fs::path& path, const nlohmann::json& report);
nlohmann::json load_report(const fs::path& path);

/// Whole-file parsing helpers for CSV content.
std::vector<std::vector<std::string>> parse_csv(std::string_view text, std::string_view expected_header,
                                                std::string_view what);

}  // namespace cvmcl::io
