#ifndef GEOMREID_SYNTH_HPP
#define GEOMREID_SYNTH_HPP

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geomreid/types.hpp"

namespace geomreid {

// Body segments; part labels equal these indices.
enum Bone : int {
  kPelvis = 0,
  kSpine,
  kHead,
  kUpperArmL,
  kUpperArmR,
  kForearmL,
  kForearmR,
  kThighL,
  kThighR,
  kShinFootL,
  kShinFootR,
  kNumBones,  // 11
};

const char* bone_name(int bone);

/// Per-identity geometric and gait parameters; the identity signal.
struct IdentityParams {
  double height_m = 1.75;                    // [1.55, 1.95]
  Eigen::VectorXd limb_scale;                // kNumBones positive factors, L/R within 3%
  double cadence_hz = 1.0;                   // [0.7, 1.3]
  double stride_amp_rad = 0.5;               // [0.3, 0.8]
  double arm_swing_rad = 0.3;                // [0.1, 0.6]
  double phase_rad = 0.0;                    // [0, 2pi)
  Eigen::Matrix<double, kNumBones, 3> attire_palette;  // per-part base rgb
  Eigen::Vector3d foot_color;                // confounded-mode override, golden-ratio hue
  Eigen::Vector3d eyewear_color;             // confounded-mode head-band override
};

enum class GenTag { confounded, standardized };

struct GenMode {
  GenTag tag = GenTag::standardized;
  double noise_sd_m = 0.005;  // per-point Gaussian position noise
};

inline const char* gen_tag_name(GenTag t) {
  return t == GenTag::confounded ? "confounded" : "standardized";
}
GenTag parse_gen_tag(const std::string& s);

/// Deterministic function of (seed, id_index); parameters uniform over their ranges.
IdentityParams sample_identity(std::uint64_t seed, int id_index);

/// Articulated capsule-skeleton walker: sinusoidal gait at cadence_hz, ~2048
/// surface points per frame, per-point part labels, colors per mode.
PersonSequence generate_sequence(const IdentityParams& params, const GenMode& mode, int n_frames,
                                 double fps, std::uint64_t seq_seed);

/// Full-factorial synthetic dataset: every identity in every surgery.
/// Sequence seeds derive deterministically from (seed, surgery, identity, k).
std::pair<DatasetManifest, std::vector<PersonSequence>> make_dataset(int n_identities, int n_surgeries,
                                                                     int seqs_per_surgery,
                                                                     const GenMode& mode,
                                                                     std::uint64_t seed,
                                                                     int n_frames = 40,
                                                                     double fps = 30.0, int jobs = 1);

// Scrub base color shared by all parts in standardized mode.
inline const Eigen::Vector3d kScrubColor{0.35, 0.55, 0.65};
inline constexpr double kColorNoiseSd = 0.02;

// Golden-ratio hue assignment used for the confounded-mode shortcut colors.
double identity_hue(int id_index);
double eyewear_hue(int id_index);

}  // namespace geomreid

#endif  // GEOMREID_SYNTH_HPP
