#include "cvmcl/io.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace cvmcl::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using geo::Pose2D;

namespace {

constexpr std::uint16_t kVersion = 1;

class Writer {
public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<std::uint8_t, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void finish() { put<std::uint32_t>(crc32(bytes_)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
  Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

  void need(std::size_t n, std::string_view field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated file while reading " + std::string(field) + " at byte offset " +
                        std::to_string(pos_) + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(bytes_.size() - pos_) + ")");
    }
  }

  template <class T>
  T get(std::string_view field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view raw(std::size_t n, std::string_view field) {
    need(n, field);
    std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  // Validates magic, version and the CRC trailer before any payload parsing.
  void header(const char (&m)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), m, 4) != 0) {
      fail(std::string("bad magic, expected \"") + m + "\"");
    }
    pos_ = 4;
    const auto version = get<std::uint16_t>("version");
    if (version != kVersion) {
      throw FormatError(what_ + ": unsupported version " + std::to_string(version) + " (field version, expected " +
                        std::to_string(kVersion) + ")");
    }
    if (bytes_.size() < pos_ + 4) {
      need(bytes_.size() + 1, "crc32");
    }
    const std::size_t body = bytes_.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes_.data() + body, 4);
    const std::uint32_t actual = crc32(bytes_.first(body));
    if (stored != actual) {
      throw FormatError(what_ + ": CRC mismatch (field crc32: stored " + hex32(stored) + ", computed " +
                        hex32(actual) + ")");
    }
    bytes_ = bytes_.first(body);
  }

  void done() const {
    if (pos_ != bytes_.size()) {
      fail(std::to_string(bytes_.size() - pos_) + " unexpected trailing bytes");
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, std::string_view field) {
  if (v > 0xffffffffu) {
    throw InvalidArgument(std::string(field) + " exceeds 2^32-1");
  }
  return static_cast<std::uint32_t>(v);
}

std::string join_row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) {
      out += ',';
    }
    out += c;
    first = false;
  }
  out += '\n';
  return out;
}

std::size_t parse_size(std::string_view s, std::string_view field) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("cannot parse field " + std::string(field) + " value \"" + std::string(s) + "\"");
  }
  return v;
}

int parse_flag(std::string_view s, std::string_view field) {
  if (s == "0") {
    return 0;
  }
  if (s == "1") {
    return 1;
  }
  throw FormatError("field " + std::string(field) + " must be 0 or 1, got \"" + std::string(s) + "\"");
}

constexpr std::string_view kTrajectoryHeader = "t,x,y,theta,v,omega,v_noisy,omega_noisy";
constexpr std::string_view kPairsHeader = "ground_index,sat_x,sat_y,sat_theta,label";
constexpr std::string_view kTraceHeader =
    "step,mean_x,mean_y,mean_theta,pos_std,neff,resampled,converged,truth_x,truth_y,err_m";

void check_finite_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw InvalidArgument("report: non-finite number at " + where);
  }
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      check_finite_json(v, where + "/" + k);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      check_finite_json(j[i], where + "/" + std::to_string(i));
    }
  }
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot open " + tmp.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw Error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void write_atomic(const fs::path& path, std::string_view text) {
  write_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  const auto b = read_bytes(path);
  return {b.begin(), b.end()};
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) {
    throw Error("format_double failed");
  }
  return {buf.data(), p};
}

double parse_double(std::string_view s, std::string_view field) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw FormatError("cannot parse field " + std::string(field) + " value \"" + std::string(s) + "\"");
  }
  return v;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text, std::string_view expected_header,
                                                std::string_view what) {
  std::vector<std::vector<std::string>> rows;
  const std::size_t ncols = static_cast<std::size_t>(std::count(expected_header.begin(), expected_header.end(), ',')) + 1;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    ++line_no;
    if (line_no == 1) {
      if (line != expected_header) {
        throw FormatError(std::string(what) + ": header mismatch, expected \"" + std::string(expected_header) + "\"");
      }
      continue;
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::size_t s = 0;
    while (true) {
      const std::size_t c = line.find(',', s);
      cells.emplace_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) {
        break;
      }
      s = c + 1;
    }
    if (cells.size() != ncols) {
      throw FormatError(std::string(what) + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " fields, expected " + std::to_string(ncols));
    }
    rows.push_back(std::move(cells));
  }
  if (line_no == 0) {
    throw FormatError(std::string(what) + ": empty file, missing header");
  }
  return rows;
}

fs::path world_file_path(const fs::path& raster_path) {
  fs::path p = raster_path;
  p.replace_extension(".wld");
  return p;
}

void save_raster(const fs::path& path, const geo::GeoRaster& raster) {
  Writer w;
  w.magic("CVRT");
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(checked_u32(raster.width(), "width"));
  w.put<std::uint32_t>(checked_u32(raster.height(), "height"));
  w.put<std::uint32_t>(checked_u32(raster.channels(), "channels"));
  for (double v : raster.pixels().data) {
    w.put<float>(static_cast<float>(v));
  }
  w.finish();

  std::string world;
  const auto k = raster.transform().coefficients();
  for (std::size_t i : {0, 3, 1, 4, 2, 5}) {
    world += format_double(k[i]) + "\n";
  }
  write_atomic(path, w.bytes());
  write_atomic(world_file_path(path), world);
}

geo::GeoRaster load_raster(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes, "raster " + path.string());
  r.header("CVRT");
  const std::size_t width = r.get<std::uint32_t>("width");
  const std::size_t height = r.get<std::uint32_t>("height");
  const std::size_t channels = r.get<std::uint32_t>("channels");
  const std::size_t n = width * height * channels;
  if (r.remaining() != n * sizeof(float)) {
    r.fail("payload length " + std::to_string(r.remaining()) + " does not match width*height*channels*4 = " +
           std::to_string(n * sizeof(float)));
  }
  std::vector<double> data(n);
  for (double& v : data) {
    v = r.get<float>("pixel");
  }
  r.done();

  const fs::path wld = world_file_path(path);
  const std::string text = read_text(wld);
  std::istringstream in(text);
  std::array<double, 6> k{};
  constexpr std::array<const char*, 6> names{"A", "D", "B", "E", "C", "F"};
  constexpr std::array<std::size_t, 6> slot{0, 3, 1, 4, 2, 5};
  std::string line;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!std::getline(in, line)) {
      throw FormatError("world file " + wld.string() + ": missing line " + std::to_string(i + 1) + " (" +
                        names[i] + ")");
    }
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    k[slot[i]] = parse_double(line, std::string("world file ") + names[i]);
  }
  return {width, height, channels, std::move(data), geo::GeoTransform(k[0], k[1], k[2], k[3], k[4], k[5])};
}

void save_trajectory(const fs::path& path, const sim::Trajectory& trajectory) {
  std::string out(kTrajectoryHeader);
  out += '\n';
  for (const auto& s : trajectory) {
    out += join_row({format_double(s.t), format_double(s.truth.x()), format_double(s.truth.y()),
                     format_double(s.truth.theta()), format_double(s.control.v), format_double(s.control.omega),
                     format_double(s.noisy.v), format_double(s.noisy.omega)});
  }
  write_atomic(path, out);
}

sim::Trajectory load_trajectory(const fs::path& path) {
  const auto rows = parse_csv(read_text(path), kTrajectoryHeader, "trajectory " + path.string());
  if (rows.size() < 2) {
    throw FormatError("trajectory " + path.string() + ": >=2 poses required, found " + std::to_string(rows.size()));
  }
  sim::Trajectory t;
  t.reserve(rows.size());
  for (const auto& r : rows) {
    sim::TrajectoryStep s;
    s.t = parse_double(r[0], "t");
    s.truth = Pose2D(parse_double(r[1], "x"), parse_double(r[2], "y"), parse_double(r[3], "theta"));
    s.control = {parse_double(r[4], "v"), parse_double(r[5], "omega")};
    s.noisy = {parse_double(r[6], "v_noisy"), parse_double(r[7], "omega_noisy")};
    if (!t.empty() && !(s.t > t.back().t)) {
      throw FormatError("trajectory " + path.string() + ": field t must increase (row " +
                        std::to_string(t.size() + 1) + ")");
    }
    t.push_back(s);
  }
  return t;
}

void save_pairs(const fs::path& path, std::span<const embed::MinedPair> pairs) {
  std::string out(kPairsHeader);
  out += '\n';
  for (const auto& p : pairs) {
    out += join_row({std::to_string(p.ground_index), format_double(p.sat_pose.x()), format_double(p.sat_pose.y()),
                     format_double(p.sat_pose.theta()), std::to_string(p.label)});
  }
  write_atomic(path, out);
}

std::vector<embed::MinedPair> load_pairs(const fs::path& path) {
  const auto rows = parse_csv(read_text(path), kPairsHeader, "pairs " + path.string());
  std::vector<embed::MinedPair> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({parse_size(r[0], "ground_index"),
                   Pose2D(parse_double(r[1], "sat_x"), parse_double(r[2], "sat_y"), parse_double(r[3], "sat_theta")),
                   parse_flag(r[4], "label")});
  }
  return out;
}

nlohmann::json encoder_config_to_json(const embed::EncoderConfig& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : c.layers) {
    layers.push_back({{"filters", l.filters}, {"kernel", l.kernel}, {"stride", l.stride}, {"pool", l.pool}});
  }
  const auto dims = [](const embed::ViewDims& d) {
    return nlohmann::json{{"rows", d.rows}, {"cols", d.cols}, {"channels", d.channels}};
  };
  return {{"ground", dims(c.ground)}, {"sat", dims(c.sat)},         {"layers", layers},
          {"mid_tap_layer", c.mid_tap_layer}, {"embed_dim", c.embed_dim}, {"seed", c.seed}};
}

embed::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  try {
    embed::EncoderConfig c;
    const auto dims = [](const nlohmann::json& d) {
      return embed::ViewDims{d.at("rows").get<std::size_t>(), d.at("cols").get<std::size_t>(),
                             d.at("channels").get<std::size_t>()};
    };
    c.ground = dims(j.at("ground"));
    c.sat = dims(j.at("sat"));
    c.layers.clear();
    for (const auto& l : j.at("layers")) {
      c.layers.push_back({l.at("filters").get<std::size_t>(), l.at("kernel").get<std::size_t>(),
                          l.at("stride").get<std::size_t>(), l.at("pool").get<bool>()});
    }
    c.mid_tap_layer = j.at("mid_tap_layer").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("encoder config: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_checkpoint(const embed::SiameseModel& model) {
  const auto stats = [](const embed::ViewStats& s) { return nlohmann::json{{"mean", s.mean}, {"stddev", s.stddev}}; };
  const nlohmann::json meta{{"encoder", encoder_config_to_json(model.config)},
                            {"ground_stats", stats(model.ground_stats)},
                            {"sat_stats", stats(model.sat_stats)}};
  const std::string text = meta.dump();
  Writer w;
  w.magic("CVSM");
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(checked_u32(text.size(), "config length"));
  w.raw(text);
  for (const auto* p : {&model.ground.values, &model.sat.values}) {
    w.put<std::uint32_t>(checked_u32(p->size(), "parameter count"));
    for (double v : *p) {
      w.put<float>(static_cast<float>(v));
    }
  }
  w.finish();
  return std::move(w.bytes());
}

embed::SiameseModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.header("CVSM");
  const std::size_t len = r.get<std::uint32_t>("config length");
  const std::string_view text = r.raw(len, "config");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("config is not valid JSON: ") + e.what());
  }
  embed::SiameseModel model;
  try {
    model = embed::SiameseModel::create(encoder_config_from_json(meta.at("encoder")));
    const auto stats = [](const nlohmann::json& s) {
      return embed::ViewStats{s.at("mean").get<std::vector<double>>(), s.at("stddev").get<std::vector<double>>()};
    };
    model.ground_stats = stats(meta.at("ground_stats"));
    model.sat_stats = stats(meta.at("sat_stats"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  if (model.ground_stats.mean.size() != model.config.ground.channels ||
      model.sat_stats.mean.size() != model.config.sat.channels) {
    throw FormatError("checkpoint config: stats channel count does not match the encoder");
  }
  for (auto* p : {&model.ground.values, &model.sat.values}) {
    const std::size_t n = r.get<std::uint32_t>("parameter count");
    if (n != p->size()) {
      r.fail("parameter count " + std::to_string(n) + " does not match the architecture (" +
             std::to_string(p->size()) + ")");
    }
    for (double& v : *p) {
      v = r.get<float>("parameter");
    }
  }
  r.done();
  return model;
}

std::uint32_t save_checkpoint(const fs::path& path, const embed::SiameseModel& model) {
  const auto bytes = encode_checkpoint(model);
  write_atomic(path, bytes);
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  return crc;
}

embed::SiameseModel load_checkpoint(const fs::path& path, std::uint32_t* fingerprint) {
  const auto bytes = read_bytes(path);
  try {
    auto model = decode_checkpoint(bytes);
    if (fingerprint != nullptr) {
      std::memcpy(fingerprint, bytes.data() + bytes.size() - 4, 4);
    }
    return model;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_index(const fs::path& path, const match::EmbeddingIndex& index) {
  Writer w;
  w.magic("CVIX");
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(checked_u32(index.size(), "count"));
  w.put<std::uint32_t>(checked_u32(index.dim(), "dim"));
  for (const auto& e : index.entries()) {
    w.put<double>(e.pose.x());
    w.put<double>(e.pose.y());
    w.put<double>(e.pose.theta());
    for (float v : e.embedding) {
      w.put<float>(v);
    }
  }
  w.put<std::uint32_t>(index.fingerprint());
  w.finish();
  write_atomic(path, w.bytes());
}

match::EmbeddingIndex load_index(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes, "index " + path.string());
  r.header("CVIX");
  const std::size_t count = r.get<std::uint32_t>("count");
  const std::size_t dim = r.get<std::uint32_t>("dim");
  const std::size_t expect = count * (3 * sizeof(double) + dim * sizeof(float)) + sizeof(std::uint32_t);
  if (r.remaining() != expect) {
    r.fail("payload length " + std::to_string(r.remaining()) + " does not match count/dim (" +
           std::to_string(expect) + ")");
  }
  std::vector<match::IndexEntry> entries(count);
  for (auto& e : entries) {
    const double x = r.get<double>("pose x");
    const double y = r.get<double>("pose y");
    const double th = r.get<double>("pose theta");
    e.pose = Pose2D(x, y, th);
    e.embedding.resize(dim);
    for (float& v : e.embedding) {
      v = r.get<float>("embedding");
    }
  }
  const auto fp = r.get<std::uint32_t>("fingerprint");
  r.done();
  try {
    return match::EmbeddingIndex(std::move(entries), fp);
  } catch (const InvalidArgument& e) {
    throw FormatError("index " + path.string() + ": " + e.what());
  }
}

void save_trace(const fs::path& path, std::span<const filter::TraceRow> trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& t : trace) {
    out += join_row({std::to_string(t.step), format_double(t.mean.x()), format_double(t.mean.y()),
                     format_double(t.mean.theta()), format_double(t.pos_std), format_double(t.neff),
                     t.resampled ? "1" : "0", t.converged ? "1" : "0", format_double(t.truth.x()),
                     format_double(t.truth.y()), format_double(t.err_m)});
  }
  write_atomic(path, out);
}

std::vector<filter::TraceRow> load_trace(const fs::path& path) {
  const auto rows = parse_csv(read_text(path), kTraceHeader, "trace " + path.string());
  std::vector<filter::TraceRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    filter::TraceRow t;
    t.step = parse_size(r[0], "step");
    t.mean = Pose2D(parse_double(r[1], "mean_x"), parse_double(r[2], "mean_y"), parse_double(r[3], "mean_theta"));
    t.pos_std = parse_double(r[4], "pos_std");
    t.neff = parse_double(r[5], "neff");
    t.resampled = parse_flag(r[6], "resampled") == 1;
    t.converged = parse_flag(r[7], "converged") == 1;
    // The truth heading is not part of the trace.
    t.truth = Pose2D(parse_double(r[8], "truth_x"), parse_double(r[9], "truth_y"), 0.0);
    t.err_m = parse_double(r[10], "err_m");
    out.push_back(t);
  }
  return out;
}

void save_cloud(const fs::path& path, const filter::ParticleSet& set) {
  Writer w;
  w.magic("CVPC");
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(checked_u32(set.size(), "N"));
  for (const auto& p : set.particles) {
    w.put<double>(p.pose.x());
    w.put<double>(p.pose.y());
    w.put<double>(p.pose.theta());
    w.put<double>(p.weight);
  }
  w.finish();
  write_atomic(path, w.bytes());
}

filter::ParticleSet load_cloud(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes, "cloud " + path.string());
  r.header("CVPC");
  const std::size_t n = r.get<std::uint32_t>("N");
  if (r.remaining() != n * 4 * sizeof(double)) {
    r.fail("payload length " + std::to_string(r.remaining()) + " does not match N*32");
  }
  filter::ParticleSet set;
  set.particles.resize(n);
  for (auto& p : set.particles) {
    const double x = r.get<double>("x");
    const double y = r.get<double>("y");
    const double th = r.get<double>("theta");
    p = {Pose2D(x, y, th), r.get<double>("weight")};
  }
  r.done();
  return set;
}

std::string dump_report(const nlohmann::json& report) {
  if (!report.is_object() || !report.contains("schema_version") || !report["schema_version"].is_number_integer()) {
    throw InvalidArgument("report: integer field schema_version is required");
  }
  check_finite_json(report, "");
  return report.dump(2) + "\n";
}

void save_report(const fs::path& path, const nlohmann::json& report) { write_atomic(path, dump_report(report)); }

nlohmann::json load_report(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) {
    throw FormatError("report " + path.string() + ": missing field schema_version");
  }
  if (j["schema_version"] != kReportSchemaVersion) {
    throw FormatError("report " + path.string() + ": unsupported schema_version " + j["schema_version"].dump());
  }
  return j;
}

}  // namespace cvmcl::io
