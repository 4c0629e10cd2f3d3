#include "crossuda/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "crossuda/mvol.hpp"

namespace crossuda {

namespace {

constexpr int kMargin = 2;       // voxels between any blob and the volume border
constexpr int kPlaceRetries = 64;

struct Band {
  double lo, hi;  // fractional positions inside a dim
};

int sample_center(Rng& rng, int dim, double radius, Band band) {
  const int lo = std::max(static_cast<int>(std::ceil(radius)) + kMargin,
                          static_cast<int>(std::lround(band.lo * dim)));
  const int hi = std::min(dim - 1 - static_cast<int>(std::ceil(radius)) - kMargin,
                          static_cast<int>(std::lround(band.hi * dim)));
  require(lo <= hi, ErrorKind::config,
          "phantom blob cannot be placed within dims (radius too large)");
  return rng.uniform_int(lo, hi);
}

}  // namespace

void PhantomConfig::validate() const {
  require(n_cases >= 1, ErrorKind::config, "n_cases must be >= 1");
  require(n_eval_cases >= 0, ErrorKind::config, "n_eval_cases must be >= 0");
  require(dims[0] >= 8 && dims[1] >= 16 && dims[2] >= 16, ErrorKind::config,
          "phantom dims too small");
  require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, ErrorKind::config,
          "spacing must be positive");
  for (const auto& r : {vs_radius_range, cochlea_radius_range})
    require(r[0] > 0 && r[0] <= r[1], ErrorKind::config, "bad radius range");
  require(noise_sigma >= 0, ErrorKind::config, "noise_sigma must be >= 0");
  require(domain_gap.gamma > 0, ErrorKind::config, "gamma must be > 0");
  require(domain_gap.bias_amplitude >= 0, ErrorKind::config,
          "bias_amplitude must be >= 0");
  // Blobs must fit between the margins, and the two lateral cochlea bands
  // must stay separated so class 2 always has two components.
  const int min_dim = std::min({dims[0], dims[1], dims[2]});
  require(2 * (vs_radius_range[1] + kMargin) + 1 <= min_dim, ErrorKind::config,
          "vs radius range does not fit within dims");
  require(2 * (cochlea_radius_range[1] + kMargin) + 1 <= min_dim, ErrorKind::config,
          "cochlea radius range does not fit within dims");
  const double gap = 0.72 * dims[2] - 0.28 * dims[2] - 2 * cochlea_radius_range[1];
  require(gap > 2.0, ErrorKind::config, "cochlea lateral bands too close for dims");
}

uint64_t phantom_case_seed(const PhantomConfig& cfg, int index, Domain domain) {
  uint64_t s = seed_combine(cfg.seed, "phantom");
  s = seed_combine(s, domain == Domain::source ? 1u : 2u);
  return seed_combine(s, static_cast<uint64_t>(index));
}

namespace {

struct Anatomy {
  Volume clean;  // noiseless source-style render, values in [0,1]
  LabelMask label;
};

Anatomy render_anatomy(const PhantomConfig& cfg, Rng& rng) {
  const int Z = cfg.dims[0], Y = cfg.dims[1], X = cfg.dims[2];
  Anatomy a;
  a.clean = Volume(Z, Y, X, cfg.spacing);
  a.label = LabelMask(Z, Y, X, cfg.spacing);

  // Smooth background texture: three low-frequency waves around 0.30, with
  // total amplitude <= 0.18 so blob intensities stay separable.
  struct Wave {
    double amp, uz, uy, ux, phase;
  };
  std::array<Wave, 3> waves;
  for (auto& w : waves)
    w = {rng.uniform(0.02, 0.06), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
         rng.uniform(-1.2, 1.2), rng.uniform(0.0, 2.0 * M_PI)};

  const float vs_intensity = static_cast<float>(rng.uniform(0.84, 0.92));
  const float cochlea_intensity = static_cast<float>(rng.uniform(0.62, 0.72));

  // VS ellipsoid.
  const double rz = rng.uniform(cfg.vs_radius_range[0], cfg.vs_radius_range[1]);
  const double ry = rng.uniform(cfg.vs_radius_range[0], cfg.vs_radius_range[1]);
  const double rx = rng.uniform(cfg.vs_radius_range[0], cfg.vs_radius_range[1]);
  const int vz = sample_center(rng, Z, rz, {0.30, 0.70});
  const int vy = sample_center(rng, Y, ry, {0.35, 0.65});
  const int vx = sample_center(rng, X, rx, {0.42, 0.58});
  for (int z = 0; z < Z; ++z)
    for (int y = 0; y < Y; ++y)
      for (int x = 0; x < X; ++x) {
        const double dz = (z - vz) / rz, dy = (y - vy) / ry, dx = (x - vx) / rx;
        if (dz * dz + dy * dy + dx * dx <= 1.0) a.label.at(z, y, x) = 1;
      }

  // Two lateralized cochlea spheres, re-drawn until disjoint from the VS
  // support and from each other.
  const Band lateral[2] = {{0.17, 0.28}, {0.72, 0.83}};
  for (int side = 0; side < 2; ++side) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlaceRetries && !placed; ++attempt) {
      const double r =
          rng.uniform(cfg.cochlea_radius_range[0], cfg.cochlea_radius_range[1]);
      const int cz = sample_center(rng, Z, r, {0.30, 0.70});
      const int cy = sample_center(rng, Y, r, {0.35, 0.65});
      const int cx = sample_center(rng, X, r, lateral[side]);
      std::vector<int64_t> voxels;
      bool collides = false;
      const int ir = static_cast<int>(std::ceil(r));
      for (int z = cz - ir; z <= cz + ir && !collides; ++z)
        for (int y = cy - ir; y <= cy + ir && !collides; ++y)
          for (int x = cx - ir; x <= cx + ir && !collides; ++x) {
            const double dz = z - cz, dy = y - cy, dx = x - cx;
            if (dz * dz + dy * dy + dx * dx > r * r) continue;
            if (a.label.at(z, y, x) != 0) collides = true;
            voxels.push_back(a.label.index(z, y, x));
          }
      if (collides) continue;
      for (int64_t i : voxels) a.label.data[i] = 2;
      placed = true;
    }
    require(placed, ErrorKind::config, "phantom cochlea blob cannot be placed");
  }

  for (int z = 0; z < Z; ++z)
    for (int y = 0; y < Y; ++y)
      for (int x = 0; x < X; ++x) {
        const uint8_t cls = a.label.at(z, y, x);
        if (cls == 1) {
          a.clean.at(z, y, x) = vs_intensity;
        } else if (cls == 2) {
          a.clean.at(z, y, x) = cochlea_intensity;
        } else {
          double b = 0.30;
          for (const auto& w : waves)
            b += w.amp * std::sin(2.0 * M_PI *
                                      (w.uz * z / Z + w.uy * y / Y + w.ux * x / X) +
                                  w.phase);
          a.clean.at(z, y, x) = static_cast<float>(b);
        }
      }
  return a;
}

}  // namespace

Volume domain_transform(const Volume& v, const PhantomConfig& cfg, Rng& rng) {
  const double gamma = cfg.domain_gap.gamma;
  const double amp = cfg.domain_gap.bias_amplitude;
  const double fz = rng.uniform(-0.8, 0.8);
  const double fy = rng.uniform(-0.8, 0.8);
  const double fx = rng.uniform(-0.8, 0.8);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  Volume out = v;
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x) {
        const double base = std::pow(std::max(0.0, 1.0 - double(v.at(z, y, x))), gamma);
        const double bias =
            amp * std::sin(2.0 * M_PI *
                               (fz * z / v.nz + fy * y / v.ny + fx * x / v.nx) +
                           phase);
        const double val = base + bias + cfg.noise_sigma * rng.normal();
        out.at(z, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
  return out;
}

Case generate_case(const PhantomConfig& cfg, int index, Domain domain) {
  cfg.validate();
  require(index >= 0, ErrorKind::argument, "case index must be >= 0");
  Rng rng(phantom_case_seed(cfg, index, domain));
  Anatomy a = render_anatomy(cfg, rng);

  Case c;
  c.domain = domain;
  char buf[32];
  if (domain == Domain::source) {
    std::snprintf(buf, sizeof(buf), "source_%03d", index);
  } else if (index < cfg.n_cases) {
    std::snprintf(buf, sizeof(buf), "target_%03d", index);
  } else {
    std::snprintf(buf, sizeof(buf), "target_eval_%03d", index - cfg.n_cases);
  }
  c.id = buf;
  c.label = std::move(a.label);

  if (domain == Domain::source) {
    c.volume = std::move(a.clean);
    if (cfg.noise_sigma > 0) {
      for (int64_t i = 0; i < c.volume.size(); ++i)
        c.volume.data[i] = static_cast<float>(std::clamp(
            double(c.volume.data[i]) + cfg.noise_sigma * rng.normal(), 0.0, 1.0));
    }
  } else {
    c.volume = domain_transform(a.clean, cfg, rng);
  }
  return c;
}

GeneratedDataset generate_dataset(const PhantomConfig& cfg,
                                  const std::filesystem::path& out_dir,
                                  bool overwrite) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path manifest_path = out_dir / "manifest.json";
  require(overwrite || !fs::exists(manifest_path), ErrorKind::config,
          "dataset already exists (pass overwrite): " + manifest_path.string());
  fs::create_directories(out_dir / "source");
  fs::create_directories(out_dir / "target");
  fs::create_directories(out_dir / "target_eval");
  fs::create_directories(out_dir / "target_gt_eval_only");

  Manifest train, eval;
  for (int i = 0; i < cfg.n_cases; ++i) {
    Case c = generate_case(cfg, i, Domain::source);
    ManifestEntry e;
    e.id = c.id;
    e.domain = Domain::source;
    e.volume_path = "source/" + c.id + ".mvol";
    e.label_path = "source/" + c.id + "_label.mvol";
    write_mvol(c.volume, out_dir / e.volume_path);
    write_mvol(*c.label, out_dir / *e.label_path);
    train.cases.push_back(std::move(e));
  }
  for (int i = 0; i < cfg.n_cases; ++i) {
    Case c = generate_case(cfg, i, Domain::target);
    ManifestEntry e;
    e.id = c.id;
    e.domain = Domain::target;
    e.volume_path = "target/" + c.id + ".mvol";
    write_mvol(c.volume, out_dir / e.volume_path);
    // Ground truth exists for evaluation only; never listed in the manifest.
    write_mvol(*c.label, out_dir / "target_gt_eval_only" / (c.id + "_label.mvol"));
    train.cases.push_back(std::move(e));
  }
  for (int i = 0; i < cfg.n_eval_cases; ++i) {
    Case c = generate_case(cfg, cfg.n_cases + i, Domain::target);
    ManifestEntry e;
    e.id = c.id;
    e.domain = Domain::target;
    e.volume_path = "target_eval/" + c.id + ".mvol";
    write_mvol(c.volume, out_dir / e.volume_path);
    write_mvol(*c.label, out_dir / "target_gt_eval_only" / (c.id + "_label.mvol"));
    eval.cases.push_back(std::move(e));
  }

  GeneratedDataset result;
  result.manifest_path = manifest_path;
  result.eval_manifest_path = out_dir / "manifest_eval.json";
  result.eval_gt_dir = out_dir / "target_gt_eval_only";
  train.save(result.manifest_path);
  eval.save(result.eval_manifest_path);
  return result;
}

}  // namespace crossuda
