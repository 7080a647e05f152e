#include "cvmcl/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "cvmcl/io.hpp"

namespace cvmcl::pipeline {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

void parse_value(const std::string& s, double& v) { v = io::parse_double(s, "value"); }

void parse_value(const std::string& s, std::uint64_t& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw InvalidArgument("expected a non-negative integer, got \"" + s + "\"");
  }
}

void parse_value(const std::string& s, bool& v) {
  if (s == "true" || s == "1") {
    v = true;
  } else if (s == "false" || s == "0") {
    v = false;
  } else {
    throw InvalidArgument("expected true/false, got \"" + s + "\"");
  }
}

void parse_value(const std::string& s, geo::Rect& r) {
  const auto p = split(s, ',');
  if (p.size() != 4) {
    throw InvalidArgument("expected xmin,ymin,xmax,ymax, got \"" + s + "\"");
  }
  parse_value(p[0], r.xmin);
  parse_value(p[1], r.ymin);
  parse_value(p[2], r.xmax);
  parse_value(p[3], r.ymax);
}

void parse_value(const std::string& s, std::vector<double>& v) {
  v.clear();
  for (const auto& p : split(s, ',')) {
    double x;
    parse_value(p, x);
    v.push_back(x);
  }
}

// filters:kernel:stride:pool, comma separated
void parse_value(const std::string& s, std::vector<embed::ConvLayerSpec>& layers) {
  layers.clear();
  for (const auto& item : split(s, ',')) {
    const auto p = split(item, ':');
    if (p.size() != 4) {
      throw InvalidArgument("expected filters:kernel:stride:pool, got \"" + item + "\"");
    }
    embed::ConvLayerSpec l;
    std::uint64_t f, k, st;
    parse_value(p[0], f);
    parse_value(p[1], k);
    parse_value(p[2], st);
    parse_value(p[3], l.pool);
    l.filters = f;
    l.kernel = k;
    l.stride = st;
    layers.push_back(l);
  }
}

std::string format_value(double v) { return io::format_double(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(const geo::Rect& r) {
  return io::format_double(r.xmin) + "," + io::format_double(r.ymin) + "," + io::format_double(r.xmax) + "," +
         io::format_double(r.ymax);
}
std::string format_value(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + io::format_double(v[i]);
  }
  return out;
}
std::string format_value(const std::vector<embed::ConvLayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    out += (i ? "," : "") + std::to_string(l.filters) + ":" + std::to_string(l.kernel) + ":" +
           std::to_string(l.stride) + ":" + (l.pool ? "1" : "0");
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Access>
Field field(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](RunConfig& c, const std::string& s) { parse_value(s, access(c)); },
          [access](const RunConfig& c) {
            RunConfig copy = c;
            return format_value(access(copy));
          }};
}

// Stored in radians, exposed in degrees.
template <class Access>
Field degrees(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](RunConfig& c, const std::string& s) {
            double d;
            parse_value(s, d);
            access(c) = d * kDeg;
          },
          [access](const RunConfig& c) {
            RunConfig copy = c;
            return format_value(access(copy) / kDeg);
          }};
}

#define CVMCL_F(sec, key, expr) field(sec, key, [](RunConfig& c) -> decltype(auto) { return (expr); })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f{
        CVMCL_F("run", "seed", c.seed),

        CVMCL_F("world", "size_px", c.world.size),
        CVMCL_F("world", "channels", c.world.channels),
        CVMCL_F("world", "n_bumps", c.world.n_bumps),
        CVMCL_F("world", "sigma_min_px", c.world.bump_sigma_range.first),
        CVMCL_F("world", "sigma_max_px", c.world.bump_sigma_range.second),
        CVMCL_F("world", "pixel_size", c.world.pixel_size),

        CVMCL_F("trajectory", "n_steps", c.trajectory.n_steps),
        CVMCL_F("trajectory", "dt", c.trajectory.dt),
        CVMCL_F("trajectory", "speed_mean", c.trajectory.speed_mean),
        CVMCL_F("trajectory", "speed_std", c.trajectory.speed_std),
        CVMCL_F("trajectory", "yawrate_std", c.trajectory.yawrate_std),
        CVMCL_F("trajectory", "odom_v_noise", c.trajectory.odom_v_noise),
        CVMCL_F("trajectory", "odom_w_noise", c.trajectory.odom_w_noise),
        CVMCL_F("trajectory", "margin", c.trajectory.margin),

        CVMCL_F("groundview", "n_rays", c.groundview.n_rays),
        CVMCL_F("groundview", "n_ranges", c.groundview.n_ranges),
        degrees("groundview", "fov_deg", [](RunConfig& c) -> double& { return c.groundview.fov; }),
        CVMCL_F("groundview", "max_range", c.groundview.max_range),
        CVMCL_F("groundview", "mix_strength", c.groundview.mix_strength),
        CVMCL_F("groundview", "noise_std", c.groundview.noise_std),
        CVMCL_F("groundview", "gamma", c.groundview.gamma),

        CVMCL_F("crop", "out_width", c.crop.out_width),
        CVMCL_F("crop", "out_height", c.crop.out_height),
        CVMCL_F("crop", "extent_across", c.crop.extent_across),
        CVMCL_F("crop", "extent_along", c.crop.extent_along),
        CVMCL_F("crop", "lookahead", c.crop.lookahead),

        CVMCL_F("encoder", "layers", c.encoder.layers),
        CVMCL_F("encoder", "mid_tap_layer", c.encoder.mid_tap_layer),
        CVMCL_F("encoder", "embed_dim", c.encoder.embed_dim),

        CVMCL_F("train", "margin", c.train.config.margin),
        CVMCL_F("train", "learning_rate", c.train.config.learning_rate),
        CVMCL_F("train", "adam_beta1", c.train.config.adam_beta1),
        CVMCL_F("train", "adam_beta2", c.train.config.adam_beta2),
        CVMCL_F("train", "adam_eps", c.train.config.adam_eps),
        CVMCL_F("train", "batch_size", c.train.config.batch_size),
        CVMCL_F("train", "epochs", c.train.config.epochs),
        CVMCL_F("train", "neg_per_pos", c.train.config.neg_per_pos),
        CVMCL_F("train", "n_ground", c.train.n_ground),
        CVMCL_F("train", "val_fraction", c.train.val_fraction),

        CVMCL_F("grid", "spacing", c.grid.spacing),
        CVMCL_F("grid", "n_headings", c.grid.n_headings),
        CVMCL_F("grid", "pos_dist", c.grid.thresholds.pos_dist),
        degrees("grid", "pos_angle_deg", [](RunConfig& c) -> double& { return c.grid.thresholds.pos_angle; }),
        CVMCL_F("grid", "neg_dist", c.grid.thresholds.neg_dist),

        CVMCL_F("filter", "n_particles", c.filter.config.n_particles),
        CVMCL_F("filter", "alpha", c.filter.alpha),
        CVMCL_F("filter", "alpha_scale", c.filter.alpha_scale),
        CVMCL_F("filter", "neff_frac", c.filter.config.neff_frac),
        CVMCL_F("filter", "sigma_v_rel", c.filter.config.noise.v_rel),
        CVMCL_F("filter", "sigma_omega", c.filter.config.noise.omega),
        CVMCL_F("filter", "sigma_xy", c.filter.config.noise.xy),
        CVMCL_F("filter", "conv_std", c.filter.config.conv_std),
        CVMCL_F("filter", "on_road_prob", c.filter.config.on_road_prob),
        CVMCL_F("filter", "road_half_width", c.filter.road_half_width),
        CVMCL_F("filter", "n_distractor_roads", c.filter.n_distractor_roads),
        CVMCL_F("filter", "oracle_heading_scale", c.filter.oracle_heading_scale),

        CVMCL_F("eval", "train_region", c.eval.train_region),
        CVMCL_F("eval", "eval_region", c.eval.eval_region),
        CVMCL_F("eval", "train_probe_region", c.eval.train_probe_region),
        CVMCL_F("eval", "topx", c.eval.topx),
    };
    return f;
  }();
  return all;
}

#undef CVMCL_F

}  // namespace

match::PoseGrid GridSettings::over(const geo::Rect& region) const {
  match::PoseGrid g{spacing, spacing, match::PoseGrid::uniform_headings(n_headings), region};
  g.validate();
  return g;
}

sim::WorldSpec RunConfig::world_spec(int which) const {
  sim::WorldSpec w = world;
  w.seed = mix_seed(seed, 0x100 + static_cast<std::uint64_t>(which));
  return w;
}

sim::TrajectorySpec RunConfig::train_trajectory_spec() const {
  sim::TrajectorySpec t = trajectory;
  t.n_steps = train.n_ground;
  t.seed = mix_seed(seed, 0x200);
  return t;
}

sim::TrajectorySpec RunConfig::eval_trajectory_spec() const {
  sim::TrajectorySpec t = trajectory;
  t.seed = mix_seed(seed, 0x201);
  return t;
}

sim::GroundViewSpec RunConfig::ground_spec() const {
  sim::GroundViewSpec g = groundview;
  g.channel_mix_seed = mix_seed(seed, 0x300);
  return g;
}

embed::EncoderConfig RunConfig::encoder_config() const {
  embed::EncoderConfig e = encoder;
  e.ground = {groundview.n_rays, groundview.n_ranges, world.channels};
  e.sat = {crop.out_height, crop.out_width, world.channels};
  e.seed = mix_seed(seed, 0x400);
  return e;
}

embed::TrainConfig RunConfig::train_config() const {
  embed::TrainConfig t = train.config;
  t.seed = mix_seed(seed, 0x500);
  return t;
}

std::uint64_t RunConfig::mining_seed() const { return mix_seed(seed, 0x501); }
std::uint64_t RunConfig::road_seed() const { return mix_seed(seed, 0x600); }

filter::FilterConfig RunConfig::filter_config(std::size_t run) const {
  filter::FilterConfig f = filter.config;
  f.seed = mix_seed(mix_seed(seed, 0x700), run);
  return f;
}

void RunConfig::validate() const {
  world.validate();
  train_trajectory_spec().validate();
  eval_trajectory_spec().validate();
  groundview.validate();
  crop.validate();
  encoder_config().validate();
  train.config.validate();
  if (train.n_ground < 2) {
    throw InvalidArgument("train.n_ground must be >= 2");
  }
  if (!(train.val_fraction >= 0.0 && train.val_fraction < 1.0)) {
    throw InvalidArgument("train.val_fraction must lie in [0, 1)");
  }
  static_cast<void>(grid.over(eval.eval_region));
  if (!(grid.thresholds.pos_dist < grid.thresholds.neg_dist)) {
    throw InvalidArgument("grid.pos_dist must be < grid.neg_dist");
  }
  filter::FilterConfig f = filter.config;
  f.alpha = 1.0;
  f.validate();
  if (!(filter.alpha >= 0.0) || !(filter.alpha_scale > 0.0)) {
    throw InvalidArgument("filter.alpha must be >= 0 and filter.alpha_scale > 0");
  }
  for (const auto& [name, r] : {std::pair{"train_region", eval.train_region}, std::pair{"eval_region", eval.eval_region},
                                std::pair{"train_probe_region", eval.train_probe_region}}) {
    if (r.empty()) {
      throw InvalidArgument(std::string("eval.") + name + " is empty");
    }
    const double extent = static_cast<double>(world.size) * world.pixel_size;
    if (r.xmin < 0.0 || r.ymin < 0.0 || r.xmax > extent || r.ymax > extent) {
      throw InvalidArgument(std::string("eval.") + name + " must lie inside the world extent");
    }
  }
  for (double x : eval.topx) {
    if (!(x > 0.0 && x <= 100.0)) {
      throw InvalidArgument("eval.topx entries must lie in (0, 100]");
    }
  }
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  std::map<std::pair<std::string, std::string>, const Field*> by_key;
  std::set<std::string> sections;
  for (const Field& f : fields()) {
    by_key[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }
  RunConfig c;
  for (const auto& [section, keys] : tree) {
    if (!sections.contains(section)) {
      throw InvalidArgument("config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : keys) {
      const auto it = by_key.find({section, key});
      if (it == by_key.end()) {
        throw InvalidArgument("config: unknown key " + section + "." + key);
      }
      try {
        it->second->set(c, value.get_value<std::string>());
      } catch (const Error& e) {
        throw InvalidArgument("config: " + section + "." + key + ": " + e.what());
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_text(path)); }

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace cvmcl::pipeline
