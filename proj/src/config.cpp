#include "rddpm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

namespace rddpm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + what);
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  if (v.empty()) bad_value(key, v, "a number");
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_integer<int>(key, trim(item)));
  return out;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define RDDPM_INT(KEY, MEMBER)                                                                        \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_integer<int>(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                                   \
  }
#define RDDPM_DOUBLE(KEY, MEMBER)                                                                     \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_double(k, v); }, \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }                                       \
  }
#define RDDPM_BOOL(KEY, MEMBER)                                                                       \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }                   \
  }
#define RDDPM_STRING(KEY, MEMBER)                                                                     \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; },                \
        [](const RunConfig& c) { return std::string(c.MEMBER); }                                      \
  }
#define RDDPM_PATH(KEY, MEMBER)                                                                       \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; },                \
        [](const RunConfig& c) { return c.MEMBER.string(); }                                          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RDDPM_STRING("run.command", command),
      RDDPM_PATH("run.out_dir", out_dir),
      Field{"run.seed",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = parse_integer<std::uint64_t>(k, v);
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      RDDPM_INT("run.threads", threads),
      RDDPM_STRING("manifold", manifold),
      RDDPM_INT("sphere.n", sphere_n),
      RDDPM_INT("so.k", so_k),
      RDDPM_INT("dihedral.atoms", dihedral_atoms),
      Field{"dihedral.indices",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const auto l = parse_int_list(k, v);
              if (l.size() != 4) bad_value(k, v, "four atom indices");
              for (int i = 0; i < 4; ++i) c.dihedral_indices[i] = l[i];
            },
            [](const RunConfig& c) {
              return fmt_list({c.dihedral_indices.begin(), c.dihedral_indices.end()});
            }},
      RDDPM_DOUBLE("dihedral.phi0_deg", dihedral_phi0_deg),
      RDDPM_DOUBLE("newton.tol", newton.tol),
      RDDPM_INT("newton.max_steps", newton.max_steps),
      RDDPM_DOUBLE("refine.dt", refine.dt),
      RDDPM_DOUBLE("refine.target_tol", refine.target_tol),
      RDDPM_DOUBLE("refine.max_time", refine.max_time),
      RDDPM_DOUBLE("schedule.T", schedule.T),
      RDDPM_INT("schedule.N", schedule.N),
      RDDPM_DOUBLE("schedule.gamma_min", schedule.gamma_min),
      RDDPM_DOUBLE("schedule.gamma_max", schedule.gamma_max),
      RDDPM_STRING("drift.kind", drift_kind),
      RDDPM_DOUBLE("drift.kappa", drift_kappa),
      RDDPM_PATH("drift.reference_file", drift_reference_file),
      RDDPM_INT("model.hidden_width", model_hidden_width),
      RDDPM_INT("model.hidden_layers", model_hidden_layers),
      RDDPM_DOUBLE("model.ema_decay", model_ema_decay),
      RDDPM_BOOL("model.equivariant", model_equivariant),
      RDDPM_INT("train.batch_size", batch_size),
      RDDPM_INT("train.epochs", epochs),
      RDDPM_INT("train.refresh_every", refresh_every),
      RDDPM_INT("train.validate_every", validate_every),
      RDDPM_DOUBLE("train.validation_fraction", validation_fraction),
      RDDPM_DOUBLE("train.test_fraction", test_fraction),
      RDDPM_INT("train.val_paths_per_point", val_paths_per_point),
      RDDPM_INT("train.nll_paths_per_point", nll_paths_per_point),
      RDDPM_DOUBLE("train.learning_rate", learning_rate),
      RDDPM_DOUBLE("train.clip_norm", clip_norm),
      RDDPM_INT("train.max_attempts", max_attempts),
      RDDPM_STRING("dataset.source", dataset_source),
      RDDPM_INT("dataset.count", dataset_count),
      RDDPM_PATH("dataset.file", dataset_file),
      RDDPM_STRING("dataset.format", dataset_format),
      RDDPM_BOOL("dataset.refine", dataset_refine),
      RDDPM_BOOL("dataset.reassign_isolated", dataset_reassign_isolated),
      RDDPM_INT("dataset.lat_bins", dataset_lat_bins),
      RDDPM_INT("dataset.lon_bins", dataset_lon_bins),
      RDDPM_INT("dataset.modes", dataset_modes),
      RDDPM_DOUBLE("dataset.y_std", dataset_y_std),
      RDDPM_DOUBLE("dataset.kappa", dataset_kappa),
      RDDPM_DOUBLE("dataset.noise", dataset_noise),
      RDDPM_PATH("dataset.save", dataset_save),
      Field{"prior.log_volume",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "none")
                c.prior_log_volume.reset();
              else
                c.prior_log_volume = parse_double(k, v);
            },
            [](const RunConfig& c) {
              return c.prior_log_volume ? fmt_double(*c.prior_log_volume) : std::string("none");
            }},
      RDDPM_INT("prior.burn_in_steps", prior_burn_in_steps),
      RDDPM_INT("generate.count", generate_count),
      Field{"generate.record_steps",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.generate_record_steps = parse_int_list(k, v);
            },
            [](const RunConfig& c) { return fmt_list(c.generate_record_steps); }},
      RDDPM_INT("forward.count", forward_count),
      RDDPM_PATH("eval.checkpoint", checkpoint),
      RDDPM_STRING("eval.split", nll_split),
      RDDPM_STRING("stats.kind", stats_kind),
      RDDPM_INT("stats.bins", stats_bins),
      Field{"stats.powers",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.stats_powers = parse_int_list(k, v); },
            [](const RunConfig& c) { return fmt_list(c.stats_powers); }},
  };
  return table;
}

#undef RDDPM_INT
#undef RDDPM_DOUBLE
#undef RDDPM_BOOL
#undef RDDPM_STRING
#undef RDDPM_PATH

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

}  // namespace

RunConfig default_config(const std::string& manifold) {
  RunConfig c;
  c.manifold = manifold;
  if (manifold == "sphere") {
    c.schedule = {4.0, 400, 0.01, 1.0};
    c.refresh_every = 1;
    c.epochs = 20000;
    c.batch_size = 512;
    c.model_hidden_width = 512;
    c.model_hidden_layers = 5;
    c.dataset_source = "uniform";
  } else if (manifold == "so") {
    c.schedule = {1.0, 500, 0.2, 2.0};
    c.refresh_every = 100;
    c.epochs = 2000;
    c.batch_size = 512;
    c.model_hidden_width = 512;
    c.model_hidden_layers = 3;
    c.dataset_source = "so_mixture";
    c.stats_powers = {1, 2, 4, 5};
  } else if (manifold == "dihedral") {
    c.schedule = {0.1, 200, 1.0, 1.0};
    c.newton.tol = 1e-5;
    c.refresh_every = 100;
    c.epochs = 5000;
    c.batch_size = 512;
    c.model_hidden_width = 512;
    c.model_hidden_layers = 5;
    c.drift_kind = "rmsd";
    c.model_equivariant = true;
    c.dataset_source = "dihedral_toy";
  } else {
    throw ConfigError("manifold must be sphere, so or dihedral (got '" + manifold + "')");
  }
  return c;
}

namespace {

std::vector<std::pair<std::string, std::string>> read_entries(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + " line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!find_field(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  auto entries = read_entries(text, "config");
  for (const std::string& o : overrides) {
    for (auto& [k, v] : read_entries(o, "override")) {
      auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == k; });
      if (it != entries.end())
        it->second = v;
      else
        entries.emplace_back(k, v);
    }
  }
  std::string manifold = "sphere";
  for (const auto& [k, v] : entries)
    if (k == "manifold") manifold = v;
  RunConfig cfg = default_config(manifold);
  for (const auto& [k, v] : entries) find_field(k)->set(cfg, k, v);
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "ckpt_best.txt" : checkpoint;
}

void RunConfig::validate() const {
  require(threads >= 1, "run.threads must be >= 1");
  require(one_of(manifold, {"sphere", "so", "dihedral"}), "manifold must be sphere, so or dihedral");
  require(sphere_n >= 2, "sphere.n must be >= 2");
  require(so_k >= 2, "so.k must be >= 2");
  require(dihedral_atoms >= 4, "dihedral.atoms must be >= 4");
  {
    std::set<int> distinct(dihedral_indices.begin(), dihedral_indices.end());
    require(distinct.size() == 4, "dihedral.indices must be distinct");
    for (int i : dihedral_indices)
      require(i >= 0 && i < dihedral_atoms, "dihedral.indices out of range");
  }
  try {
    newton.validate();
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(refine.dt > 0.0 && refine.target_tol > 0.0 && refine.max_time > 0.0,
          "refine settings must be positive");

  require(one_of(drift_kind, {"zero", "rmsd"}), "drift.kind must be zero or rmsd");
  require(drift_kappa > 0.0, "drift.kappa must be positive");
  require(drift_kind == "zero" || manifold == "dihedral", "drift.kind = rmsd needs manifold = dihedral");
  require(!model_equivariant || manifold == "dihedral", "model.equivariant needs manifold = dihedral");

  require(model_hidden_width >= 1, "model.hidden_width must be >= 1");
  require(model_hidden_layers >= 0, "model.hidden_layers must be >= 0");
  require(model_ema_decay >= 0.0 && model_ema_decay < 1.0, "model.ema_decay must lie in [0, 1)");

  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(epochs >= 0, "train.epochs must be >= 0");
  require(refresh_every >= 1, "train.refresh_every must be >= 1");
  require(validate_every >= 0, "train.validate_every must be >= 0");
  require(validation_fraction >= 0.0 && test_fraction >= 0.0 && validation_fraction + test_fraction < 1.0,
          "train.validation_fraction + train.test_fraction must lie in [0, 1)");
  require(val_paths_per_point >= 1 && nll_paths_per_point >= 1, "paths per point must be >= 1");
  require(learning_rate > 0.0, "train.learning_rate must be positive");
  require(clip_norm > 0.0, "train.clip_norm must be positive");
  require(max_attempts >= 1, "train.max_attempts must be >= 1");

  require(one_of(dataset_source, {"csv", "so_mixture", "vmf", "uniform", "dihedral_toy"}),
          "dataset.source must be csv, so_mixture, vmf, uniform or dihedral_toy");
  require(one_of(dataset_format, {"latlon", "xyz"}), "dataset.format must be latlon or xyz");
  if (dataset_source == "csv") {
    require(!dataset_file.empty(), "dataset.source = csv needs dataset.file");
    require(dataset_format == "xyz" || (manifold == "sphere" && sphere_n == 3),
            "dataset.format = latlon needs manifold = sphere with sphere.n = 3");
  } else {
    require(dataset_count >= 1, "dataset.count must be >= 1");
  }
  require(dataset_source != "so_mixture" || manifold == "so", "dataset.source = so_mixture needs manifold = so");
  require(dataset_source != "vmf" || manifold == "sphere", "dataset.source = vmf needs manifold = sphere");
  require(dataset_source != "uniform" || manifold != "dihedral",
          "dataset.source = uniform needs manifold = sphere or so");
  require(dataset_source != "dihedral_toy" || manifold == "dihedral",
          "dataset.source = dihedral_toy needs manifold = dihedral");
  require(!dataset_reassign_isolated || (manifold == "sphere" && sphere_n == 3),
          "dataset.reassign_isolated needs manifold = sphere with sphere.n = 3");
  require(dataset_lat_bins >= 1 && dataset_lon_bins >= 1, "dataset bin counts must be >= 1");
  require(dataset_modes >= 1, "dataset.modes must be >= 1");
  require(dataset_y_std > 0.0, "dataset.y_std must be positive");
  require(dataset_kappa > 0.0, "dataset.kappa must be positive");
  require(dataset_noise >= 0.0, "dataset.noise must be >= 0");
  require(prior_burn_in_steps >= 1, "prior.burn_in_steps must be >= 1");

  require(generate_count >= 0, "generate.count must be >= 0");
  require(forward_count >= 0, "forward.count must be >= 0");
  require(!generate_record_steps.empty(), "generate.record_steps must not be empty");
  for (int k : generate_record_steps)
    require(k >= 0 && k <= schedule.N, "generate.record_steps entries must lie in [0, schedule.N]");
  require(one_of(nll_split, {"train", "val", "test"}), "eval.split must be train, val or test");
  require(one_of(stats_kind, {"auto", "trace", "dihedral", "latlon"}),
          "stats.kind must be auto, trace, dihedral or latlon");
  require(stats_bins >= 1, "stats.bins must be >= 1");
  for (int p : stats_powers) require(p >= 1, "stats.powers entries must be >= 1");
}

LevelSetManifold build_manifold(const RunConfig& cfg) {
  if (cfg.manifold == "sphere") return sphere(cfg.sphere_n);
  if (cfg.manifold == "so") return special_orthogonal(cfg.so_k);
  if (cfg.manifold == "dihedral")
    return dihedral(cfg.dihedral_atoms, cfg.dihedral_indices, cfg.dihedral_phi0_deg * std::numbers::pi / 180.0);
  throw ConfigError("unknown manifold '" + cfg.manifold + "'");
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.batch_size = cfg.batch_size;
  t.epochs = cfg.epochs;
  t.refresh_every = cfg.refresh_every;
  t.validate_every = cfg.validate_every;
  t.schedule = cfg.schedule;
  t.newton = cfg.newton;
  t.seed = cfg.seed;
  t.threads = cfg.threads;
  t.val_paths_per_point = cfg.val_paths_per_point;
  t.nll_paths_per_point = cfg.nll_paths_per_point;
  t.learning_rate = cfg.learning_rate;
  t.clip_norm = cfg.clip_norm;
  t.max_attempts = cfg.max_attempts;
  return t;
}

std::optional<Vec> equivariance_reference(const RunConfig& cfg, const LevelSetManifold& m) {
  if (cfg.manifold != "dihedral") return std::nullopt;
  if (!cfg.drift_reference_file.empty()) {
    const auto rows = read_points_csv(cfg.drift_reference_file);
    if (rows.empty()) throw IoError("reference file " + cfg.drift_reference_file.string() + " has no rows");
    if (rows.front().size() != m.ambient_dim())
      throw ConfigError("reference cloud has " + std::to_string(rows.front().size()) + " coordinates, expected " +
                        std::to_string(m.ambient_dim()));
    Vec ref = rows.front();
    if (!m.on_manifold(ref)) ref = refine_to_manifold(m, ref, cfg.refine);
    return ref;
  }
  Rng rng(derive_seed(cfg.seed, "reference"));
  return dihedral_reference_cloud(m, rng);
}

DriftSpec build_drift(const RunConfig& cfg, const LevelSetManifold& m) {
  DriftSpec d;
  if (cfg.drift_kind == "rmsd") {
    d.kind = DriftKind::RmsdHarmonic;
    d.kappa = cfg.drift_kappa;
    d.reference = *equivariance_reference(cfg, m);
  }
  d.validate(m.ambient_dim());
  return d;
}

PreparedData prepare_data(const RunConfig& cfg, const LevelSetManifold& m) {
  PreparedData out;
  Rng rng(derive_seed(cfg.seed, "dataset"));
  Dataset& ds = out.data;
  const int n = m.ambient_dim();
  if (cfg.dataset_source == "uniform") {
    for (int i = 0; i < cfg.dataset_count; ++i)
      ds.points.push_back(cfg.manifold == "sphere" ? uniform_sphere(n, rng) : flatten(haar_orthogonal(cfg.so_k, rng)));
    ds.provenance = "uniform";
  } else if (cfg.dataset_source == "vmf") {
    VmfMixture mix;
    mix.kappa = cfg.dataset_kappa;
    for (int j = 0; j < cfg.dataset_modes; ++j) {
      mix.centers.push_back(uniform_sphere(n, rng));
      mix.weights.push_back(1.0 / cfg.dataset_modes);
    }
    ds = vmf_mixture_sphere(mix, cfg.dataset_count, rng);
    out.vmf = mix;
  } else if (cfg.dataset_source == "so_mixture") {
    SoMixture mix = wrapped_normal_so(cfg.so_k, cfg.dataset_modes, cfg.dataset_y_std, cfg.dataset_count, rng);
    out.so_centers = mix.centers;
    ds = std::move(mix.data);
  } else if (cfg.dataset_source == "dihedral_toy") {
    out.reference = equivariance_reference(cfg, m);
    ds = dihedral_toy(m, *out.reference, cfg.dataset_noise, cfg.dataset_count, rng);
  } else if (cfg.dataset_source == "csv") {
    if (cfg.dataset_format == "latlon") {
      LatLonLoad load = load_latlon_csv(cfg.dataset_file);
      if (!load.rejected_lines.empty())
        std::cerr << "warning: " << load.rejected_lines.size() << " malformed rows skipped in "
                  << cfg.dataset_file.string() << "\n";
      ds = std::move(load.data);
    } else {
      ds.points = read_points_csv(cfg.dataset_file);
      ds.provenance = "csv:" + cfg.dataset_file.string();
    }
    for (const Vec& p : ds.points)
      if (p.size() != n)
        throw ConfigError("dataset rows have " + std::to_string(p.size()) + " coordinates, expected " +
                          std::to_string(n));
  }
  if (ds.points.empty()) throw ConfigError("dataset is empty");
  if (cfg.dataset_refine) refine_dataset(ds, m, cfg.refine);
  for (const Vec& p : ds.points)
    if (m.constraint(p).norm() > 1e-5) throw ConfigError("dataset point off the manifold; set dataset.refine = true");
  if (cfg.manifold == "dihedral" && !out.reference) out.reference = equivariance_reference(cfg, m);

  const std::uint64_t split_seed = derive_seed(cfg.seed, "split");
  if (cfg.dataset_reassign_isolated)
    split_with_isolated_reassignment(ds, split_seed, cfg.dataset_lat_bins, cfg.dataset_lon_bins,
                                     cfg.validation_fraction, cfg.test_fraction);
  else
    standard_split(ds, split_seed, cfg.validation_fraction, cfg.test_fraction);
  out.train = ds.subset(Split::Train);
  out.val = ds.subset(Split::Val);
  out.test = ds.subset(Split::Test);
  if (!cfg.dataset_save.empty()) write_points_csv(cfg.dataset_save, ds.points);
  return out;
}

PriorLogDensity prior_log_density(const RunConfig& cfg, const LevelSetManifold& m) {
  if (cfg.manifold == "sphere") {
    const double v = -log_sphere_area(m.ambient_dim());
    return [v](const Vec&) { return v; };
  }
  const double v = (cfg.manifold == "so" && cfg.prior_log_volume) ? -*cfg.prior_log_volume : 0.0;
  return [v](const Vec&) { return v; };
}

bool prior_is_normalized(const RunConfig& cfg, const LevelSetManifold&) {
  return cfg.manifold == "sphere" || (cfg.manifold == "so" && cfg.prior_log_volume.has_value());
}

PriorSampler prior_sampler(const RunConfig& cfg, const LevelSetManifold& m) {
  if (cfg.manifold == "sphere") {
    const int n = m.ambient_dim();
    return [n](Rng& rng) { return uniform_sphere(n, rng); };
  }
  if (cfg.manifold == "so") {
    const int k = cfg.so_k;
    return [k](Rng& rng) { return flatten(haar_orthogonal(k, rng)); };
  }
  const DriftSpec drift = build_drift(cfg, m);
  const Vec start = drift.kind == DriftKind::RmsdHarmonic ? drift.reference : *equivariance_reference(cfg, m);
  const double sigma = cfg.schedule.N > 0 ? cfg.schedule.sigma(cfg.schedule.N - 1) : 0.0;
  const int steps = cfg.prior_burn_in_steps;
  const NewtonConfig newton = cfg.newton;
  // The lambda captures m by pointer; the manifold must outlive the sampler.
  const LevelSetManifold* mp = &m;
  return [mp, drift, start, sigma, steps, newton](Rng& rng) {
    Vec x = start;
    if (sigma <= 0.0) return x;
    for (int s = 0; s < steps; ++s) {
      auto step = forward_step(*mp, x, sigma, drift, rng, newton);
      if (step) x = std::move(step->y);
    }
    return x;
  };
}

}  // namespace rddpm
