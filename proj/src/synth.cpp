#include "geomreid/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "geomreid/common.hpp"

namespace geomreid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kGoldenConj = 0.6180339887498949;

// Rest-pose segment proportions as fractions of stature, plus sampling weight.
struct BoneSpec {
  double len_frac;
  double r_frac;
  double weight;
};

constexpr BoneSpec kBoneSpec[kNumBones] = {
    {0.075, 0.075, 1.0},  // pelvis
    {0.270, 0.062, 1.0},  // spine
    {0.063, 0.062, 2.6},  // head (upweighted: crown density drives height estimates)
    {0.170, 0.026, 1.0},  // upper arm L
    {0.170, 0.026, 1.0},  // upper arm R
    {0.210, 0.022, 1.0},  // forearm L
    {0.210, 0.022, 1.0},  // forearm R
    {0.245, 0.042, 1.0},  // thigh L
    {0.245, 0.042, 1.0},  // thigh R
    {0.285, 0.032, 1.0},  // shin+foot L
    {0.285, 0.032, 1.0},  // shin+foot R
};

constexpr int kPointsPerFrame = 2048;
constexpr double kHipHalfWidthFrac = 0.065;
constexpr double kShoulderHalfWidthFrac = 0.110;
constexpr double kStepLiftFrac = 0.035;
constexpr double kStrideGain = 0.63;      // maps stride_amp_rad to foot travel
constexpr double kShinStretchMax = 1.15;  // heel-rise analog during stance
constexpr double kElbowBendRad = 0.35;

// Eyewear band: axial fraction of the head capsule covered by the glasses strap.
constexpr double kEyewearLo = 0.45;
constexpr double kEyewearHi = 0.75;

struct BodyDims {
  double len[kNumBones];
  double radius[kNumBones];
  double hip_y;
  double neck_y;
  double hip_halfw;
  double shoulder_halfw;
  double stride_half;
  double step_lift;
};

BodyDims body_dims(const IdentityParams& p) {
  BodyDims d{};
  double len0[kNumBones], r0[kNumBones];
  for (int b = 0; b < kNumBones; ++b) {
    len0[b] = kBoneSpec[b].len_frac * p.height_m * p.limb_scale(b);
    r0[b] = kBoneSpec[b].r_frac * p.height_m;
  }
  const double down = std::max(len0[kThighL] + len0[kShinFootL], len0[kThighR] + len0[kShinFootR]) +
                      std::max(r0[kShinFootL], r0[kShinFootR]);
  const double up = len0[kPelvis] + len0[kSpine] + len0[kHead] + r0[kHead];
  const double g = p.height_m / (down + up);  // pin standing crown height exactly
  for (int b = 0; b < kNumBones; ++b) {
    d.len[b] = len0[b] * g;
    d.radius[b] = r0[b] * g;
  }
  d.hip_y = down * g;
  d.neck_y = d.hip_y + d.len[kPelvis] + d.len[kSpine];
  d.hip_halfw = kHipHalfWidthFrac * p.height_m * g;
  d.shoulder_halfw = kShoulderHalfWidthFrac * p.height_m * g;
  const double mean_leg = 0.5 * (d.len[kThighL] + d.len[kShinFootL] + d.len[kThighR] + d.len[kShinFootR]);
  d.stride_half = kStrideGain * std::sin(p.stride_amp_rad) * mean_leg;
  d.step_lift = kStepLiftFrac * p.height_m;
  return d;
}

struct Segment {
  Eigen::Vector3d a, b;
  double r;
};

// Two-link leg solve in the sagittal plane; the shin may stretch up to
// kShinStretchMax to keep the stance foot planted (heel-rise analog).
void leg_ik(const Eigen::Vector3d& hip, double target_x, double target_y, double thigh, double shin_rest,
            Eigen::Vector3d& knee, Eigen::Vector3d& end) {
  Eigen::Vector2d pq(target_x - hip.x(), target_y - hip.y());
  double dist = pq.norm();
  double shin = shin_rest;
  if (dist > thigh + shin_rest) {
    if (dist <= thigh + shin_rest * kShinStretchMax) {
      shin = dist - thigh;
    } else {
      shin = shin_rest * kShinStretchMax;
      pq *= (thigh + shin) / dist;
      dist = thigh + shin;
    }
  }
  const double dmin = std::abs(thigh - shin) + 1e-9;
  if (dist < dmin) {
    pq = dist > 1e-12 ? Eigen::Vector2d(pq * (dmin / dist)) : Eigen::Vector2d(0.0, -dmin);
    dist = dmin;
  }
  double cos_a = (thigh * thigh + dist * dist - shin * shin) / (2.0 * thigh * dist);
  cos_a = std::clamp(cos_a, -1.0, 1.0);
  const double sin_a = std::sqrt(1.0 - cos_a * cos_a);
  const Eigen::Vector2d u = pq / dist;
  const Eigen::Vector2d fwd(-u.y(), u.x());  // knee bends toward +x
  const Eigen::Vector2d knee2 = u * (thigh * cos_a) + fwd * (thigh * sin_a);
  knee = hip + Eigen::Vector3d(knee2.x(), knee2.y(), 0.0);
  end = hip + Eigen::Vector3d(pq.x(), pq.y(), 0.0);
}

std::array<Segment, kNumBones> pose_at(const BodyDims& d, const IdentityParams& p, double t) {
  std::array<Segment, kNumBones> seg;
  const double omega = 2.0 * kPi * p.cadence_hz;
  const double ph_l = omega * t + p.phase_rad;
  const double ph_r = ph_l + kPi;

  const Eigen::Vector3d root(0.0, d.hip_y, 0.0);
  const Eigen::Vector3d up(0.0, 1.0, 0.0);

  seg[kPelvis] = {root, root + up * d.len[kPelvis], d.radius[kPelvis]};
  seg[kSpine] = {seg[kPelvis].b, seg[kPelvis].b + up * d.len[kSpine], d.radius[kSpine]};
  const Eigen::Vector3d neck = seg[kSpine].b;
  seg[kHead] = {neck, neck + up * d.len[kHead], d.radius[kHead]};

  const struct {
    int thigh, shin, uarm, farm;
    double leg_phase, side;
  } sides[2] = {{kThighL, kShinFootL, kUpperArmL, kForearmL, ph_l, +1.0},
                {kThighR, kShinFootR, kUpperArmR, kForearmR, ph_r, -1.0}};

  for (const auto& s : sides) {
    // Leg: foot sole follows x = S sin(ph); lifts only while swinging forward.
    const double swing = std::max(0.0, std::cos(s.leg_phase));
    const double sole_x = d.stride_half * std::sin(s.leg_phase);
    const double sole_y = d.step_lift * swing * swing;
    const Eigen::Vector3d hip(0.0, d.hip_y, s.side * d.hip_halfw);
    Eigen::Vector3d knee, end;
    leg_ik(hip, sole_x, sole_y + d.radius[s.shin], d.len[s.thigh], d.len[s.shin], knee, end);
    knee.z() = end.z() = hip.z();
    seg[s.thigh] = {hip, knee, d.radius[s.thigh]};
    seg[s.shin] = {knee, end, d.radius[s.shin]};

    // Arm counter-swings its own side's leg.
    const double alpha = p.arm_swing_rad * std::sin(s.leg_phase + kPi);
    const Eigen::Vector3d shoulder(0.0, d.neck_y, s.side * d.shoulder_halfw);
    const Eigen::Vector3d dir1(std::sin(alpha), -std::cos(alpha), 0.0);
    const double beta = alpha + kElbowBendRad;
    const Eigen::Vector3d dir2(std::sin(beta), -std::cos(beta), 0.0);
    const Eigen::Vector3d elbow = shoulder + dir1 * d.len[s.uarm];
    seg[s.uarm] = {shoulder, elbow, d.radius[s.uarm]};
    seg[s.farm] = {elbow, elbow + dir2 * d.len[s.farm], d.radius[s.farm]};
  }
  return seg;
}

// Uniform capsule-surface sample; also reports the axial fraction (cap points
// land outside [0,1]) so the head band can be colored deterministically.
Eigen::Vector3d sample_capsule(CounterRng& rng, const Segment& seg, double& axial_frac) {
  const Eigen::Vector3d axis = seg.b - seg.a;
  const double len = axis.norm();
  const Eigen::Vector3d u = len > 1e-12 ? Eigen::Vector3d(axis / len) : Eigen::Vector3d(0, 1, 0);
  const Eigen::Vector3d ref = std::abs(u.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
  const Eigen::Vector3d n1 = u.cross(ref).normalized();
  const Eigen::Vector3d n2 = u.cross(n1);

  const double pick = rng.uniform() * (len + 2.0 * seg.r);  // area ratio cyl:caps = L : 2r
  if (pick < len) {
    const double t = rng.uniform() * len;
    const double ang = 2.0 * kPi * rng.uniform();
    axial_frac = t / len;
    return seg.a + u * t + (n1 * std::cos(ang) + n2 * std::sin(ang)) * seg.r;
  }
  const double zc = 2.0 * rng.uniform() - 1.0;
  const double ang = 2.0 * kPi * rng.uniform();
  const double rho = std::sqrt(std::max(0.0, 1.0 - zc * zc));
  const Eigen::Vector3d dir = n1 * (rho * std::cos(ang)) + n2 * (rho * std::sin(ang)) + u * zc;
  axial_frac = zc >= 0.0 ? 1.5 : -0.5;
  return (zc >= 0.0 ? seg.b : seg.a) + dir * seg.r;
}

std::array<int, kNumBones> allocate_points(const IdentityParams& p) {
  BodyDims d = body_dims(p);
  double area[kNumBones];
  double total = 0.0;
  for (int b = 0; b < kNumBones; ++b) {
    area[b] = kBoneSpec[b].weight * d.radius[b] * (d.len[b] + 2.0 * d.radius[b]);
    total += area[b];
  }
  std::array<int, kNumBones> n{};
  for (int b = 0; b < kNumBones; ++b)
    n[b] = std::max(24, static_cast<int>(std::lround(kPointsPerFrame * area[b] / total)));
  return n;
}

double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double snap_color(double c) { return std::clamp(std::round(c * 255.0) / 255.0, 0.0, 1.0); }

}  // namespace

const char* bone_name(int bone) {
  static const char* names[kNumBones] = {"pelvis",    "spine",     "head",      "upper_arm_l",
                                         "upper_arm_r", "forearm_l", "forearm_r", "thigh_l",
                                         "thigh_r",   "shin_foot_l", "shin_foot_r"};
  return bone >= 0 && bone < kNumBones ? names[bone] : "unknown";
}

GenTag parse_gen_tag(const std::string& s) {
  if (s == "confounded") return GenTag::confounded;
  if (s == "standardized") return GenTag::standardized;
  raise(Errc::invalid_arg, "unknown generation mode '" + s + "'");
}

double identity_hue(int id_index) {
  const double h = (id_index + 1) * kGoldenConj;
  return h - std::floor(h);
}

double eyewear_hue(int id_index) {
  const double h = identity_hue(id_index) + 0.5;
  return h - std::floor(h);
}

IdentityParams sample_identity(std::uint64_t seed, int id_index) {
  CounterRng rng(mix(seed, static_cast<std::uint64_t>(id_index), 0x4944u));
  IdentityParams p;
  p.height_m = rng.uniform(1.55, 1.95);
  p.limb_scale.resize(kNumBones);
  // Singleton segments draw independently; L/R pairs share a base with a
  // small asymmetry, keeping the pair within 3% of each other.
  for (int b : {kPelvis, kSpine, kHead}) p.limb_scale(b) = rng.uniform(0.92, 1.08);
  const std::pair<int, int> pairs[4] = {{kUpperArmL, kUpperArmR},
                                        {kForearmL, kForearmR},
                                        {kThighL, kThighR},
                                        {kShinFootL, kShinFootR}};
  for (const auto& [l, r] : pairs) {
    const double base = rng.uniform(0.92, 1.08);
    const double delta = rng.uniform(-0.012, 0.012);
    p.limb_scale(l) = base * (1.0 + delta);
    p.limb_scale(r) = base * (1.0 - delta);
  }
  p.cadence_hz = rng.uniform(0.7, 1.3);
  p.stride_amp_rad = rng.uniform(0.3, 0.8);
  p.arm_swing_rad = rng.uniform(0.1, 0.6);
  p.phase_rad = rng.uniform(0.0, 2.0 * kPi);
  for (int b = 0; b < kNumBones; ++b) p.attire_palette.row(b) = kScrubColor.transpose();
  p.foot_color = hsv_to_rgb(identity_hue(id_index), 1.0, 1.0);
  p.eyewear_color = hsv_to_rgb(eyewear_hue(id_index), 1.0, 0.95);
  return p;
}

PersonSequence generate_sequence(const IdentityParams& params, const GenMode& mode, int n_frames,
                                 double fps, std::uint64_t seq_seed) {
  if (n_frames < 2) raise(Errc::invalid_arg, "n_frames must be at least 2");
  if (!(fps > 0.0)) raise(Errc::invalid_arg, "fps must be positive");
  if (mode.noise_sd_m < 0.0) raise(Errc::invalid_arg, "noise_sd_m must be non-negative");

  const BodyDims dims = body_dims(params);
  const std::array<int, kNumBones> alloc = allocate_points(params);
  int total = 0;
  for (int b = 0; b < kNumBones; ++b) total += alloc[b];

  PersonSequence seq;
  seq.fps = fps;
  seq.identity_id = "unlabeled";  // callers such as make_dataset overwrite these
  seq.surgery_id = "unlabeled";
  seq.sequence_id = "unlabeled";
  seq.frames.resize(static_cast<std::size_t>(n_frames));

  for (int f = 0; f < n_frames; ++f) {
    const double t = static_cast<double>(f) / fps;
    const auto pose = pose_at(dims, params, t);

    // Independent streams: geometry is identical across appearance modes.
    CounterRng geom_rng(mix(seq_seed, static_cast<std::uint64_t>(f), 0x47454Fu));
    CounterRng color_rng(mix(seq_seed, static_cast<std::uint64_t>(f), 0x434F4Cu));

    PersonFrame frame;
    frame.points.resize(total, 3);
    frame.colors.emplace(ColorMatrix(total, 3));
    frame.part_labels.emplace(LabelVector(total));
    frame.timestamp_s = static_cast<double>(f) / fps;

    Eigen::Index row = 0;
    for (int b = 0; b < kNumBones; ++b) {
      for (int j = 0; j < alloc[b]; ++j, ++row) {
        double axial = 0.0;
        Eigen::Vector3d pt = sample_capsule(geom_rng, pose[b], axial);
        pt.x() += mode.noise_sd_m * geom_rng.normal();
        pt.y() += mode.noise_sd_m * geom_rng.normal();
        pt.z() += mode.noise_sd_m * geom_rng.normal();

        Eigen::Vector3d col = params.attire_palette.row(b).transpose();
        if (mode.tag == GenTag::confounded) {
          if (b == kShinFootL || b == kShinFootR) col = params.foot_color;
          else if (b == kHead && axial >= kEyewearLo && axial <= kEyewearHi) col = params.eyewear_color;
        }
        for (int ch = 0; ch < 3; ++ch)
          col(ch) = snap_color(col(ch) + kColorNoiseSd * color_rng.normal());

        frame.points(row, 0) = snap_f32(pt.x());
        frame.points(row, 1) = snap_f32(pt.y());
        frame.points(row, 2) = snap_f32(pt.z());
        frame.colors->row(row) = col.transpose();
        (*frame.part_labels)(row) = b;
      }
    }
    seq.frames[static_cast<std::size_t>(f)] = std::move(frame);
  }
  return seq;
}

std::pair<DatasetManifest, std::vector<PersonSequence>> make_dataset(int n_identities, int n_surgeries,
                                                                     int seqs_per_surgery,
                                                                     const GenMode& mode,
                                                                     std::uint64_t seed, int n_frames,
                                                                     double fps, int jobs) {
  if (n_identities < 1 || n_surgeries < 1 || seqs_per_surgery < 1)
    raise(Errc::invalid_arg, "all dataset counts must be at least 1");

  std::vector<IdentityParams> ids;
  ids.reserve(static_cast<std::size_t>(n_identities));
  for (int i = 0; i < n_identities; ++i) ids.push_back(sample_identity(seed, i));

  DatasetManifest manifest;
  manifest.mode_tag = gen_tag_name(mode.tag);
  std::vector<PersonSequence> seqs;

  struct Slot {
    int s, i, k;
    std::uint64_t seq_seed;
  };
  std::vector<Slot> slots;
  for (int s = 0; s < n_surgeries; ++s)
    for (int i = 0; i < n_identities; ++i)
      for (int k = 0; k < seqs_per_surgery; ++k)
        slots.push_back({s, i, k,
                         mix(seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i),
                             static_cast<std::uint64_t>(k))});

  for (const Slot& sl : slots) {
    char sid[16], iid[16], qid[32];
    std::snprintf(sid, sizeof sid, "S%02d", sl.s);
    std::snprintf(iid, sizeof iid, "P%02d", sl.i);
    std::snprintf(qid, sizeof qid, "S%02d_P%02d_K%02d", sl.s, sl.i, sl.k);
    ManifestEntry e;
    e.sequence_id = qid;
    e.identity_id = iid;
    e.surgery_id = sid;
    e.file_path = std::string("seqs/") + qid;
    e.fps = fps;
    manifest.entries.push_back(std::move(e));
  }

  seqs.resize(slots.size());
  parallel_for(slots.size(), jobs, [&](std::size_t n) {
    const Slot& sl = slots[n];
    PersonSequence seq =
        generate_sequence(ids[static_cast<std::size_t>(sl.i)], mode, n_frames, fps, sl.seq_seed);
    seq.surgery_id = manifest.entries[n].surgery_id;
    seq.identity_id = manifest.entries[n].identity_id;
    seq.sequence_id = manifest.entries[n].sequence_id;
    seqs[n] = std::move(seq);
  });
  return {std::move(manifest), std::move(seqs)};
}

}  // namespace geomreid
