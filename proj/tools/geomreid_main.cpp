#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "geomreid/experiment.hpp"
#include "geomreid/manifest.hpp"
#include "geomreid/projection.hpp"
#include "geomreid/saliency.hpp"

namespace fs = std::filesystem;
using namespace geomreid;

namespace {

DescriptorKind arm_from_flag(const std::string& arm) {
  if (arm == "geo") return DescriptorKind::geometric;
  if (arm == "rgb") return DescriptorKind::appearance;
  raise(Errc::invalid_arg, "arm must be geo or rgb");
}

std::vector<PersonSequence> dataset_from_config(const ExperimentConfig& cfg, GenTag mode, int jobs,
                                                DatasetManifest* manifest_out = nullptr) {
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    auto [manifest, seqs] = make_dataset(s.n_identities, s.n_surgeries, s.seqs_per_surgery,
                                         GenMode{mode, s.noise_sd_m}, cfg.seed, s.n_frames, s.fps, jobs);
    if (manifest_out) *manifest_out = manifest;
    return seqs;
  }
  const DatasetManifest manifest = load_manifest_file(*cfg.manifest_path);
  if (manifest_out) *manifest_out = manifest;
  return load_dataset(manifest, cfg.manifest_path->parent_path(), jobs);
}

int cmd_synth(const std::string& out, int ids, int surgeries, int seqs, const std::string& mode,
              int frames, double fps, double noise, std::uint64_t seed, const std::string& format,
              int jobs) {
  GenMode gm{parse_gen_tag(mode), noise};
  auto [manifest, sequences] = make_dataset(ids, surgeries, seqs, gm, seed, frames, fps, jobs);
  const PlyFormat pf = format == "ascii" ? PlyFormat::ascii : PlyFormat::binary_le;
  save_dataset(sequences, manifest.mode_tag, out, pf, jobs);
  std::printf("wrote %zu sequences under %s\n", sequences.size(), out.c_str());
  return 0;
}

int cmd_render(const std::string& manifest_path, const std::string& out, int res_h, int res_w,
               const std::string& sequence, const std::string& axis_remap, int jobs) {
  const DatasetManifest manifest = load_manifest_file(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  Eigen::Matrix3d remap;
  const Eigen::Matrix3d* remap_ptr = nullptr;
  if (!axis_remap.empty()) {
    remap = parse_axis_remap(axis_remap);
    remap_ptr = &remap;
  }
  fs::create_directories(out);
  std::vector<const ManifestEntry*> todo;
  for (const ManifestEntry& e : manifest.entries)
    if (sequence.empty() || e.sequence_id == sequence) todo.push_back(&e);
  if (todo.empty()) raise(Errc::invalid_arg, "no matching sequence");
  parallel_for(todo.size(), jobs, [&](std::size_t i) {
    const PersonSequence seq = load_sequence(*todo[i], base, remap_ptr);
    const std::vector<ProjectedImages> imgs = render_sequence(seq, res_h, res_w);
    const fs::path dir = fs::path(out) / seq.sequence_id;
    fs::create_directories(dir);
    char name[64];
    for (std::size_t k = 0; k < imgs.size(); ++k) {
      std::snprintf(name, sizeof name, "depth_%06zu.pgm", k);
      write_depth_pgm(imgs[k], dir / name);
      std::snprintf(name, sizeof name, "color_%06zu.ppm", k);
      write_color_ppm(imgs[k], dir / name);
      std::snprintf(name, sizeof name, "parts_%06zu.pgm", k);
      write_parts_pgm(imgs[k], dir / name);
    }
  });
  std::printf("rendered %zu sequences to %s\n", todo.size(), out.c_str());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& arm_flag, const std::string& out, int jobs) {
  const DescriptorKind arm = arm_from_flag(arm_flag);
  const GenTag mode = cfg.synthetic ? cfg.synthetic->modes.front() : GenTag::standardized;
  const std::vector<PersonSequence> seqs = dataset_from_config(cfg, mode, jobs);
  const SequenceDescriptors sd = extract_descriptors(seqs, arm, cfg.res_h, cfg.res_w, jobs);

  TrainConfig tc = cfg.train;
  tc.seed = mix(cfg.seed, 0x434C49u, static_cast<std::uint64_t>(arm == DescriptorKind::geometric ? 0 : 1));
  const TrainResult tr = train_embedding(sd.values, sd.identity_ids, tc);

  fs::create_directories(out);
  save_checkpoint(fs::path(out) / "checkpoint.json", tr.model, tc, arm);
  std::vector<std::pair<std::string, Descriptor>> cache;
  for (std::size_t i = 0; i < sd.sequence_ids.size(); ++i) {
    Descriptor d;
    d.kind = arm;
    d.values = sd.values.row(static_cast<Eigen::Index>(i)).transpose();
    cache.emplace_back(sd.sequence_ids[i], std::move(d));
  }
  save_descriptor_cache(fs::path(out) / "descriptors.csv", cache);
  std::printf("trained %s arm: final loss %.6f; checkpoint at %s/checkpoint.json\n",
              descriptor_kind_name(arm), tr.loss_curve.back(), out.c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path, const std::string& out,
             int jobs) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const GenTag mode = cfg.synthetic ? cfg.synthetic->modes.front() : GenTag::standardized;
  const std::vector<PersonSequence> seqs = dataset_from_config(cfg, mode, jobs);
  const SequenceDescriptors sd = extract_descriptors(seqs, ck.kind, cfg.res_h, cfg.res_w, jobs);
  const auto [gal, probe] = gallery_probe_split(sd);
  if (probe.empty()) raise(Errc::insufficient_data, "dataset yields no probe sequences");

  auto embed = [&](const std::vector<int>& rows) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(rows.size()), ck.model.output_dim());
    for (std::size_t i = 0; i < rows.size(); ++i)
      e.row(static_cast<Eigen::Index>(i)) = model_forward(ck.model, sd.values.row(rows[i]).transpose());
    return e;
  };
  std::vector<std::string> gal_labels, probe_labels;
  for (int r : gal) gal_labels.push_back(sd.identity_ids[static_cast<std::size_t>(r)]);
  for (int r : probe) probe_labels.push_back(sd.identity_ids[static_cast<std::size_t>(r)]);
  const MetricsReport rep = evaluate_probe_gallery(embed(probe), probe_labels, embed(gal), gal_labels);

  fs::create_directories(out);
  nlohmann::ordered_json doc;
  doc["map"] = rep.map;
  doc["cmc3"] = rep.cmc3;
  doc["acc_micro"] = rep.acc_micro;
  doc["acc_macro"] = rep.acc_macro;
  doc["per_identity_acc"] = rep.per_identity_acc;
  std::ofstream(fs::path(out) / "metrics.json", std::ios::binary) << doc.dump(2) << "\n";
  std::printf("mAP %.4f  CMC@3 %.4f  acc_micro %.4f  acc_macro %.4f\n", rep.map, rep.cmc3,
              rep.acc_micro, rep.acc_macro);
  return 0;
}

int cmd_saliency(const ExperimentConfig& cfg, const std::string& arm_flag, const std::string& out,
                 int count, int jobs) {
  const DescriptorKind arm = arm_from_flag(arm_flag);
  const GenTag mode = cfg.synthetic ? cfg.synthetic->modes.front() : GenTag::standardized;
  const std::vector<PersonSequence> seqs = dataset_from_config(cfg, mode, jobs);
  const SequenceDescriptors sd = extract_descriptors(seqs, arm, cfg.res_h, cfg.res_w, jobs);

  // Supervised identity head over the normalized descriptors; gradients run
  // back through the soft descriptor path.
  const EmbeddingModel pipeline_model = make_normalizer_model(sd.values.cols());
  Eigen::MatrixXd features(sd.values.rows(), sd.values.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    features.row(i) = model_forward(pipeline_model, sd.values.row(i).transpose());
  std::vector<std::string> id_order;
  const Eigen::MatrixXd head = train_linear_probe(features, sd.identity_ids, &id_order);

  const auto extractor = arm == DescriptorKind::appearance
                             ? make_appearance_extractor({HistogramBinning::soft, 0.05, 0.05})
                             : make_geometric_extractor(seqs.front().fps);

  const std::size_t n = std::min<std::size_t>(seqs.size(), static_cast<std::size_t>(count));
  fs::create_directories(fs::path(out) / "overlays");
  std::vector<RegionShares> shares(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const std::vector<ProjectedImages> imgs = render_sequence(seqs[i], cfg.res_h, cfg.res_w);
    const auto cit = std::find(id_order.begin(), id_order.end(), seqs[i].identity_id);
    LogitObjective obj{head, static_cast<int>(cit - id_order.begin())};
    const auto frame_maps = input_gradient_frames(*extractor, pipeline_model, imgs, SaliencyObjective{obj});
    shares[i] = region_attribution(frame_maps, imgs);
    double peak = 0.0;
    for (const auto& m : frame_maps) peak = std::max(peak, m.maxCoeff());
    const std::size_t mid = imgs.size() / 2;
    write_overlay_ppm(imgs[mid], frame_maps[mid], peak,
                      fs::path(out) / "overlays" / (seqs[i].sequence_id + ".ppm"));
  });

  std::ofstream csv(fs::path(out) / "region_shares.csv", std::ios::binary);
  csv << "part,saliency_share,area_share\n";
  char buf[40];
  for (int p = 0; p < kNumBones; ++p) {
    double s = 0.0, a = 0.0;
    for (const RegionShares& rs : shares) {
      if (rs.saliency_share.count(p)) s += rs.saliency_share.at(p);
      if (rs.area_share.count(p)) a += rs.area_share.at(p);
    }
    s /= static_cast<double>(n);
    a /= static_cast<double>(n);
    csv << bone_name(p);
    std::snprintf(buf, sizeof buf, ",%.17g", s);
    csv << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", a);
    csv << buf << "\n";
  }
  std::printf("audited %zu sequences; overlays and region_shares.csv under %s\n", n, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geomreid: geometric person re-identification toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, checkpoint_path;
  std::string arm = "both", mode = "standardized", format = "binary", sequence, axis_remap;
  int ids = 8, surgeries = 6, seqs = 2, frames = 40, res_h = 64, res_w = 64, jobs = 1, count = 24;
  double fps = 30.0, noise = 0.005;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as PLY + manifest");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--ids", ids);
  synth->add_option("--surgeries", surgeries);
  synth->add_option("--seqs", seqs);
  synth->add_option("--mode", mode)->check(CLI::IsMember({"confounded", "standardized"}));
  synth->add_option("--frames", frames);
  synth->add_option("--fps", fps);
  synth->add_option("--noise", noise);
  synth->add_option("--seed", seed);
  synth->add_option("--format", format)->check(CLI::IsMember({"ascii", "binary"}));
  synth->add_option("--jobs", jobs);

  auto* render = app.add_subcommand("render", "dump depth/color/part images for sequences");
  render->add_option("--manifest", manifest_path)->required();
  render->add_option("--out", out_dir)->required();
  render->add_option("--rows", res_h);
  render->add_option("--cols", res_w);
  render->add_option("--sequence", sequence);
  render->add_option("--axis-remap", axis_remap);
  render->add_option("--jobs", jobs);

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path)->required();
    cmd->add_option("--out", out_dir);
    cmd->add_option("--seed", seed)->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--jobs", jobs);
  };

  auto* train = app.add_subcommand("train", "train one arm on the whole dataset");
  add_config_opts(train);
  train->add_option("--arm", arm)->check(CLI::IsMember({"geo", "rgb"}))->required();

  auto* eval = app.add_subcommand("eval", "probe-gallery evaluation with a checkpoint");
  add_config_opts(eval);
  eval->add_option("--checkpoint", checkpoint_path)->required();

  auto* xval = app.add_subcommand("xval", "cross-validated experiment from a config file");
  add_config_opts(xval);
  xval->add_option("--arm", arm)->check(CLI::IsMember({"geo", "rgb", "both"}));

  auto* sal = app.add_subcommand("saliency", "gradient attribution overlays and region shares");
  add_config_opts(sal);
  sal->add_option("--arm", arm)->check(CLI::IsMember({"geo", "rgb"}))->required();
  sal->add_option("--count", count);

  auto* verify = app.add_subcommand("verify-report", "check summary.json against the emitted CSVs");
  verify->add_option("--dir", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth))
      return cmd_synth(out_dir, ids, surgeries, seqs, mode, frames, fps, noise, seed, format, jobs);
    if (app.got_subcommand(render))
      return cmd_render(manifest_path, out_dir, res_h, res_w, sequence, axis_remap, jobs);

    if (app.got_subcommand(verify)) {
      const std::vector<std::string> problems = verify_report(out_dir);
      for (const std::string& p : problems) std::cerr << "mismatch: " << p << "\n";
      std::printf("verify-report: %s\n", problems.empty() ? "OK" : "FAILED");
      return problems.empty() ? 0 : 1;
    }

    ExperimentConfig cfg = load_experiment_config_file(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.jobs = jobs;

    if (app.got_subcommand(train)) return cmd_train(cfg, arm, cfg.out_dir.string(), jobs);
    if (app.got_subcommand(eval)) return cmd_eval(cfg, checkpoint_path, cfg.out_dir.string(), jobs);
    if (app.got_subcommand(sal)) return cmd_saliency(cfg, arm, cfg.out_dir.string(), count, jobs);

    if (app.got_subcommand(xval)) {
      if (arm == "geo") cfg.arms = {DescriptorKind::geometric};
      else if (arm == "rgb") cfg.arms = {DescriptorKind::appearance};
      run_experiment(cfg);
      std::printf("experiment complete; summary at %s\n", (cfg.out_dir / "summary.json").c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
