#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "geomreid/common.hpp"
#include "geomreid/manifest.hpp"
#include "geomreid/normalize.hpp"
#include "geomreid/ply.hpp"

using namespace geomreid;

namespace {

PersonFrame random_frame(std::uint64_t seed, Eigen::Index n, bool colors, bool labels) {
  CounterRng rng(seed);
  PersonFrame f;
  f.points.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k)
      f.points(i, k) = static_cast<double>(static_cast<float>(rng.uniform(-2.0, 2.0)));
  if (colors) {
    f.colors.emplace(ColorMatrix(n, 3));
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k)
        (*f.colors)(i, k) = std::round(rng.uniform() * 255.0) / 255.0;
  }
  if (labels) {
    f.part_labels.emplace(LabelVector(n));
    for (Eigen::Index i = 0; i < n; ++i) (*f.part_labels)(i) = static_cast<int>(rng.uniform_int(11));
  }
  return f;
}

bool frames_identical(const PersonFrame& a, const PersonFrame& b) {
  if (a.points.rows() != b.points.rows()) return false;
  if (a.points != b.points) return false;
  if (a.colors.has_value() != b.colors.has_value()) return false;
  if (a.colors && *a.colors != *b.colors) return false;
  if (a.part_labels.has_value() != b.part_labels.has_value()) return false;
  if (a.part_labels && *a.part_labels != *b.part_labels) return false;
  return true;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a geomreid::Error");
  return Errc::invalid_arg;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("ply: single ascii vertex") {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n0 1.8 0\n";
  const PersonFrame f = parse_ply(ply);
  REQUIRE(f.points.rows() == 1);
  CHECK(f.points(0, 0) == 0.0);
  CHECK(f.points(0, 1) == doctest::Approx(1.8).epsilon(1e-7));
  CHECK(f.points(0, 2) == 0.0);
  CHECK(!f.colors);
  CHECK(!f.part_labels);
  CHECK(f.timestamp_s == 0.0);
}

TEST_CASE("ply: byte colors map to unit range") {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
      "0 0 0 255 0 0\n1 1 1 0 128 255\n";
  const PersonFrame f = parse_ply(ply);
  REQUIRE(f.colors);
  CHECK((*f.colors)(0, 0) == 1.0);  // 255/255
  CHECK((*f.colors)(0, 1) == 0.0);
  CHECK((*f.colors)(1, 1) == doctest::Approx(128.0 / 255.0));
  CHECK((*f.colors)(1, 2) == 1.0);
}

TEST_CASE("ply: truncated ascii body") {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 3\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n";
  CHECK(code_of([&] { parse_ply(ply); }) == Errc::truncated_body);
}

TEST_CASE("ply: truncated binary body") {
  PersonFrame f = random_frame(3, 4, false, false);
  std::string bytes = write_ply(f, PlyFormat::binary_le);
  bytes.resize(bytes.size() - 5);
  CHECK(code_of([&] { parse_ply(bytes); }) == Errc::truncated_body);
}

TEST_CASE("ply: malformed header corpora") {
  CHECK(code_of([] { parse_ply("plyx\nformat ascii 1.0\nend_header\n"); }) == Errc::malformed_header);
  CHECK(code_of([] { parse_ply("ply\nformat ascii 2.0\nelement vertex 1\nend_header\n"); }) ==
        Errc::malformed_header);
  CHECK(code_of([] { parse_ply("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n"); }) ==
        Errc::malformed_header);
  CHECK(code_of([] { parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"); }) ==
        Errc::malformed_header);  // no end_header
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                    "end_header\n0 0\n");
        }) == Errc::malformed_header);  // missing z
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nelement face 1\nproperty float x\nend_header\n");
        }) == Errc::unsupported_property);
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty float y\n"
                    "property float z\nend_header\n0 0 0\n");
        }) == Errc::unsupported_property);
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                    "property float z\nproperty float nx\nend_header\n0 0 0 0\n");
        }) == Errc::unsupported_property);
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                    "property float z\nproperty uchar red\nend_header\n0 0 0 1\n");
        }) == Errc::malformed_header);  // incomplete rgb triple
  CHECK(code_of([] {
          parse_ply("ply\nformat ascii 1.0\nproperty float x\nelement vertex 1\nend_header\n");
        }) == Errc::malformed_header);  // property before element
}

TEST_CASE("ply: binary round-trip is bit exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PersonFrame f = random_frame(seed, 50 + seed, seed % 2 == 0, seed % 3 == 0);
    CHECK(frames_identical(parse_ply(write_ply(f, PlyFormat::binary_le)), f));
  }
}

TEST_CASE("ply: binary round-trip, 1000-point frame") {
  const PersonFrame f = random_frame(99, 1000, false, false);
  CHECK(frames_identical(parse_ply(write_ply(f, PlyFormat::binary_le)), f));
}

TEST_CASE("ply: ascii round-trip at 32-bit precision") {
  PersonFrame f;
  f.points.resize(1, 3);
  f.points << 0.1, 0.2, 0.3;
  // oracle: the stored value is the float32 rounding of the decimal
  const PersonFrame g = parse_ply(write_ply(f, PlyFormat::ascii));
  CHECK(g.points(0, 0) == static_cast<double>(0.1f));
  CHECK(g.points(0, 1) == static_cast<double>(0.2f));
  CHECK(g.points(0, 2) == static_cast<double>(0.3f));
  // and a second pass is exactly stable
  CHECK(frames_identical(parse_ply(write_ply(g, PlyFormat::ascii)), g));
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const PersonFrame r = random_frame(seed, 37, true, true);
    CHECK(frames_identical(parse_ply(write_ply(r, PlyFormat::ascii)), r));
  }
}

TEST_CASE("ply: colors round-trip exactly") {
  const PersonFrame f = random_frame(7, 128, true, false);
  const PersonFrame g = parse_ply(write_ply(f, PlyFormat::binary_le));
  REQUIRE(g.colors);
  CHECK(*g.colors == *f.colors);
}

TEST_CASE("ply: binary parses labels of mixed integer widths") {
  const std::string header =
      "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nproperty short part_label\nend_header\n";
  std::string body(14, '\0');
  body[12] = static_cast<char>(0xFE);  // -2 little-endian int16
  body[13] = static_cast<char>(0xFF);
  const PersonFrame f = parse_ply(header + body);
  REQUIRE(f.part_labels);
  CHECK((*f.part_labels)(0) == -2);
}

TEST_CASE("manifest: well-formed, duplicate, missing file") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "geomreid_manifest_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "seqs/a");
  fs::create_directories(dir / "seqs/b");

  const std::string good = R"({"v":1,"mode_tag":"real","entries":[
    {"sequence_id":"s1","identity_id":"p1","surgery_id":"o1","file_path":"seqs/a","fps":30},
    {"sequence_id":"s2","identity_id":"p2","surgery_id":"o1","file_path":"seqs/b","fps":30}]})";
  const DatasetManifest m = load_manifest(good, dir);
  CHECK(m.entries.size() == 2);
  CHECK(m.mode_tag == "real");

  const std::string dup = R"({"v":1,"mode_tag":"x","entries":[
    {"sequence_id":"s1","identity_id":"p1","surgery_id":"o1","file_path":"seqs/a","fps":30},
    {"sequence_id":"s1","identity_id":"p2","surgery_id":"o1","file_path":"seqs/b","fps":30}]})";
  CHECK(code_of([&] { load_manifest(dup, dir); }) == Errc::duplicate_sequence_id);

  const std::string missing = R"({"v":1,"mode_tag":"x","entries":[
    {"sequence_id":"s1","identity_id":"p1","surgery_id":"o1","file_path":"seqs/nope","fps":30}]})";
  CHECK(code_of([&] { load_manifest(missing, dir); }) == Errc::missing_file);

  CHECK(code_of([&] { load_manifest("{not json", dir); }) == Errc::parse_error);
  CHECK(code_of([&] { load_manifest(R"({"v":2,"mode_tag":"x","entries":[]})", dir); }) ==
        Errc::parse_error);
  fs::remove_all(dir);
}

TEST_CASE("manifest: json round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "geomreid_manifest_rt";
  fs::remove_all(dir);
  fs::create_directories(dir / "seqs/a");
  DatasetManifest m;
  m.mode_tag = "confounded";
  m.entries.push_back({"s1", "p1", "o1", "seqs/a", 25.0});
  const DatasetManifest n = load_manifest(manifest_to_json(m), dir);
  CHECK(n.mode_tag == m.mode_tag);
  REQUIRE(n.entries.size() == 1);
  CHECK(n.entries[0].sequence_id == "s1");
  CHECK(n.entries[0].fps == 25.0);
  fs::remove_all(dir);
}

TEST_CASE("axis remap parsing") {
  const Eigen::Matrix3d r = parse_axis_remap("x,-z,y");
  Eigen::Vector3d v(1.0, 2.0, 3.0);
  const Eigen::Vector3d w = r * v;
  CHECK(w(0) == 1.0);
  CHECK(w(1) == -3.0);
  CHECK(w(2) == 2.0);
  CHECK_THROWS_AS(parse_axis_remap("x,y"), Error);
  CHECK_THROWS_AS(parse_axis_remap("x,x,y"), Error);
  CHECK_THROWS_AS(parse_axis_remap("x,y,q"), Error);
}

TEST_CASE("normalize: already canonical frame is a fixed point") {
  // spread mostly along x, centered, floor at 0
  PersonFrame f;
  f.points.resize(5, 3);
  f.points << -2, 0.1, 0, -1, 0.5, 0.1, 0, 1.0, -0.1, 1, 1.5, 0.05, 2, 2.0, -0.05;
  f.points.col(0).array() -= f.points.col(0).mean();
  f.points.col(2).array() -= f.points.col(2).mean();
  f.points.col(1).array() -= percentile(f.points.col(1), 1.0);
  const PersonFrame g = normalize_frame(f);
  CHECK((g.points - f.points).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("normalize: translation invariance") {
  const PersonFrame f = random_frame(11, 64, false, false);
  PersonFrame t = f;
  t.points.col(0).array() += 5.0;
  t.points.col(2).array() += 2.0;
  const PersonFrame a = normalize_frame(f);
  const PersonFrame b = normalize_frame(t);
  CHECK((a.points - b.points).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("normalize: invariance to pre-rotation about vertical axis") {
  const PersonFrame f = random_frame(12, 80, false, false);
  const PersonFrame a = normalize_frame(f);
  for (double theta : {0.3, 1.2, 2.9}) {
    PersonFrame r = f;
    const double c = std::cos(theta), s = std::sin(theta);
    for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
      const double x = f.points(i, 0), z = f.points(i, 2);
      r.points(i, 0) = c * x + s * z;
      r.points(i, 2) = -s * x + c * z;
    }
    const PersonFrame b = normalize_frame(r);
    CHECK((a.points - b.points).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("normalize: idempotent and rigid") {
  const PersonFrame f = random_frame(13, 100, true, true);
  const PersonFrame a = normalize_frame(f);
  const PersonFrame b = normalize_frame(a);
  CHECK((a.points - b.points).cwiseAbs().maxCoeff() < 1e-9);

  // all pairwise distances preserved
  double worst = 0.0;
  for (Eigen::Index i = 0; i < f.points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < f.points.rows(); ++j) {
      const double d0 = (f.points.row(i) - f.points.row(j)).norm();
      const double d1 = (a.points.row(i) - a.points.row(j)).norm();
      worst = std::max(worst, std::abs(d0 - d1));
    }
  CHECK(worst <= 1e-9);

  // colors and labels pass through untouched
  REQUIRE(a.colors);
  CHECK(*a.colors == *f.colors);
  REQUIRE(a.part_labels);
  CHECK(*a.part_labels == *f.part_labels);
}

TEST_CASE("normalize: metric scale preserved") {
  const PersonFrame f = random_frame(14, 60, false, false);
  const double span0 = f.points.col(1).maxCoeff() - f.points.col(1).minCoeff();
  const PersonFrame a = normalize_frame(f);
  const double span1 = a.points.col(1).maxCoeff() - a.points.col(1).minCoeff();
  CHECK(std::abs(span0 - span1) < 1e-6);
}

TEST_CASE("normalize: degenerate horizontal spread flagged") {
  PersonFrame f;
  f.points.resize(4, 3);
  f.points << 0, 0, 0, 0, 0.5, 0, 0, 1.0, 0, 0, 1.5, 0;  // a vertical line
  NormalizeInfo info;
  const PersonFrame g = normalize_frame(f, &info);
  CHECK(info.degenerate);
  CHECK(g.points.col(1).minCoeff() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("percentile and pairwise_sum basics") {
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == doctest::Approx(2.5));
  CHECK(percentile({5.0}, 1.0) == 5.0);
  std::vector<double> v(1000, 0.001);
  CHECK(pairwise_sum(v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("counter rng: determinism and stream independence") {
  CounterRng a(mix(1, 2)), b(mix(1, 2)), c(mix(1, 3));
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.uniform() == b.uniform());
  CHECK(a.next_u64() != c.next_u64());
}

}  // TEST_SUITE
