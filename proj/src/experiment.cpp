#include "geomreid/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "geomreid/manifest.hpp"
#include "geomreid/projection.hpp"
#include "geomreid/saliency.hpp"

namespace geomreid {

std::string format_percent_pm(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean * 100.0, sd * 100.0);
  return buf;
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = pairwise_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

using json = nlohmann::ordered_json;

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GenTag parse_mode_or_throw(const std::string& s) { return parse_gen_tag(s); }

}  // namespace

double metric_value(const MetricsReport& r, const std::string& name) {
  if (name == "map") return r.map;
  if (name == "cmc3") return r.cmc3;
  if (name == "acc_micro") return r.acc_micro;
  if (name == "acc_macro") return r.acc_macro;
  raise(Errc::invalid_arg, "unknown metric '" + name + "'");
}

ExperimentConfig load_experiment_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(Errc::parse_error, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("v", 0) != 1) raise(Errc::parse_error, "unsupported config schema version");
    ExperimentConfig cfg;
    const auto& ds = doc.at("dataset");
    if (ds.contains("synthetic")) {
      const auto& s = ds["synthetic"];
      SyntheticSpec spec;
      spec.n_identities = s.value("n_identities", spec.n_identities);
      spec.n_surgeries = s.value("n_surgeries", spec.n_surgeries);
      spec.seqs_per_surgery = s.value("seqs_per_surgery", spec.seqs_per_surgery);
      spec.n_frames = s.value("n_frames", spec.n_frames);
      spec.fps = s.value("fps", spec.fps);
      spec.noise_sd_m = s.value("noise_sd_m", spec.noise_sd_m);
      if (s.contains("modes")) {
        spec.modes.clear();
        for (const auto& m : s["modes"]) spec.modes.push_back(parse_mode_or_throw(m.get<std::string>()));
      }
      cfg.synthetic = spec;
    } else if (ds.contains("manifest")) {
      cfg.manifest_path = ds["manifest"].get<std::string>();
    } else {
      raise(Errc::parse_error, "dataset must name either synthetic params or a manifest path");
    }
    if (doc.contains("arms")) {
      cfg.arms.clear();
      for (const auto& a : doc["arms"]) cfg.arms.push_back(parse_descriptor_kind(a.get<std::string>()));
    }
    if (cfg.arms.empty()) raise(Errc::parse_error, "at least one arm required");
    if (doc.contains("resolution")) {
      cfg.res_h = doc["resolution"].at(0).get<int>();
      cfg.res_w = doc["resolution"].at(1).get<int>();
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      cfg.train.margin = t.value("margin", cfg.train.margin);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_p = t.value("batch_p", cfg.train.batch_p);
      cfg.train.batch_k = t.value("batch_k", cfg.train.batch_k);
      if (t.contains("hidden")) cfg.train.hidden = t["hidden"].get<std::vector<int>>();
      cfg.train.embed_dim = t.value("embed_dim", cfg.train.embed_dim);
    }
    cfg.k_folds = doc.value("k_folds", cfg.k_folds);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("transfer")) {
      for (const auto& t : doc["transfer"]) {
        TransferSpec spec;
        spec.train_mode = parse_mode_or_throw(t.at("train_mode").get<std::string>());
        spec.test_mode = parse_mode_or_throw(t.at("test_mode").get<std::string>());
        cfg.transfer.push_back(spec);
      }
    }
    cfg.saliency_sequences = doc.value("saliency_sequences", cfg.saliency_sequences);
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
    if (cfg.k_folds < 2) raise(Errc::parse_error, "k_folds must be at least 2");
    if (!cfg.transfer.empty() && !cfg.synthetic)
      raise(Errc::parse_error, "transfer runs require a synthetic dataset");
    return cfg;
  } catch (const json::exception& e) {
    raise(Errc::parse_error, std::string("bad config field: ") + e.what());
  }
}

ExperimentConfig load_experiment_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_experiment_config(ss.str());
}

SequenceDescriptors extract_descriptors(const std::vector<PersonSequence>& seqs, DescriptorKind arm,
                                        int res_h, int res_w, int jobs) {
  SequenceDescriptors out;
  out.sequence_ids.resize(seqs.size());
  out.identity_ids.resize(seqs.size());
  out.surgery_ids.resize(seqs.size());
  const int dim = arm == DescriptorKind::geometric ? kGeometricDim : kAppearanceDim;
  out.values.resize(static_cast<Eigen::Index>(seqs.size()), dim);
  parallel_for(seqs.size(), jobs, [&](std::size_t i) {
    const PersonSequence& seq = seqs[i];
    const std::vector<ProjectedImages> imgs = render_sequence(seq, res_h, res_w);
    const Descriptor d = arm == DescriptorKind::geometric ? geometric_descriptor(imgs, seq.fps)
                                                          : appearance_descriptor(imgs);
    out.values.row(static_cast<Eigen::Index>(i)) = d.values.transpose();
    out.sequence_ids[i] = seq.sequence_id;
    out.identity_ids[i] = seq.identity_id;
    out.surgery_ids[i] = seq.surgery_id;
  });
  return out;
}

std::pair<std::vector<int>, std::vector<int>> gallery_probe_split(const SequenceDescriptors& d) {
  std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
  for (std::size_t i = 0; i < d.sequence_ids.size(); ++i)
    groups[{d.identity_ids[i], d.surgery_ids[i]}].push_back(static_cast<int>(i));
  std::vector<int> gallery, probes;
  for (auto& [key, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      return d.sequence_ids[static_cast<std::size_t>(a)] < d.sequence_ids[static_cast<std::size_t>(b)];
    });
    gallery.push_back(rows.front());
    for (std::size_t j = 1; j < rows.size(); ++j) probes.push_back(rows[j]);
  }
  std::sort(gallery.begin(), gallery.end());
  std::sort(probes.begin(), probes.end());
  return {gallery, probes};
}

namespace {

struct ModeData {
  DatasetManifest manifest;
  std::vector<PersonSequence> sequences;
  std::map<DescriptorKind, SequenceDescriptors> descriptors;
};

struct StageLog {
  std::filesystem::path path;
  void note(const std::string& stage) {
    std::ofstream out(path, std::ios::app);
    out << stage << "\n";
  }
};

Eigen::MatrixXd embed_rows(const EmbeddingModel& model, const Eigen::MatrixXd& descriptors,
                           const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), model.output_dim());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = model_forward(model, descriptors.row(rows[i]).transpose());
  return out;
}

std::vector<std::string> pick_labels(const std::vector<std::string>& all, const std::vector<int>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(all[static_cast<std::size_t>(r)]);
  return out;
}

int arm_index(DescriptorKind k) { return k == DescriptorKind::geometric ? 0 : 1; }

json metrics_json(const MetricsReport& r, int fold) {
  return json{{"fold", fold},
              {"map", r.map},
              {"cmc3", r.cmc3},
              {"acc_micro", r.acc_micro},
              {"acc_macro", r.acc_macro}};
}

void fill_mean_sd(ArmResults& ar) {
  for (const std::string& m : kMetricNames) {
    std::vector<double> v;
    for (const MetricsReport& r : ar.folds) v.push_back(metric_value(r, m));
    ar.mean[m] = pairwise_mean(v);
    ar.sd[m] = sample_sd(v);
  }
}

json arm_results_json(const ArmResults& ar) {
  json folds = json::array();
  for (std::size_t f = 0; f < ar.folds.size(); ++f)
    folds.push_back(metrics_json(ar.folds[f], static_cast<int>(f)));
  json mean, sd, display;
  for (const std::string& m : kMetricNames) {
    mean[m] = ar.mean.at(m);
    sd[m] = ar.sd.at(m);
    display[m] = format_percent_pm(ar.mean.at(m), ar.sd.at(m));
  }
  return json{{"folds", folds}, {"mean", mean}, {"sd", sd}, {"display", display}};
}

json stat_json(const StatTestResult& t, bool f_test) {
  json out;
  out["statistic"] = std::isfinite(t.statistic) ? json(t.statistic) : json(nullptr);
  if (f_test) out["df"] = json::array({t.df1, t.df2 ? *t.df2 : 0.0});
  else out["df"] = t.df1;
  out["p"] = t.p_value;
  if (t.adjusted_p) out["p_adjusted"] = *t.adjusted_p;
  out["zero_variance"] = t.zero_variance;
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config.train);
  if (config.arms.empty()) raise(Errc::invalid_arg, "at least one arm required");
  if (config.k_folds < 2) raise(Errc::invalid_arg, "k_folds must be at least 2");

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  fs::create_directories(config.out_dir / "checkpoints");
  fs::create_directories(config.out_dir / "overlays");
  fs::create_directories(config.out_dir / "depth");
  StageLog stages{config.out_dir / "MANIFEST.txt"};
  std::ofstream(stages.path, std::ios::trunc).flush();  // fresh run

  // ------------------------------------------------------------------ data
  std::map<std::string, ModeData> data;  // mode tag -> dataset
  std::vector<std::string> mode_order;
  auto ensure_mode = [&](GenTag tag) -> ModeData& {
    const std::string key = gen_tag_name(tag);
    auto it = data.find(key);
    if (it != data.end()) return it->second;
    if (!config.synthetic) raise(Errc::invalid_arg, "mode '" + key + "' needs a synthetic dataset");
    const SyntheticSpec& s = *config.synthetic;
    GenMode gm{tag, s.noise_sd_m};
    ModeData md;
    std::tie(md.manifest, md.sequences) = make_dataset(s.n_identities, s.n_surgeries, s.seqs_per_surgery,
                                                       gm, config.seed, s.n_frames, s.fps, config.jobs);
    stages.note("generate " + key);
    return data.emplace(key, std::move(md)).first->second;
  };

  if (config.synthetic) {
    for (GenTag tag : config.synthetic->modes) {
      ensure_mode(tag);
      mode_order.push_back(gen_tag_name(tag));
    }
  } else {
    const DatasetManifest manifest = load_manifest_file(*config.manifest_path);
    ModeData md;
    md.manifest = manifest;
    md.sequences = load_dataset(manifest, config.manifest_path->parent_path(), config.jobs);
    const std::string key = manifest.mode_tag.empty() ? "real" : manifest.mode_tag;
    data.emplace(key, std::move(md));
    mode_order.push_back(key);
    stages.note("load " + key);
  }

  // ---------------------------------------------------------- descriptors
  for (const std::string& mode : mode_order) {
    ModeData& md = data.at(mode);
    for (DescriptorKind arm : config.arms) {
      md.descriptors[arm] =
          extract_descriptors(md.sequences, arm, config.res_h, config.res_w, config.jobs);
      std::vector<std::pair<std::string, Descriptor>> cache;
      for (std::size_t i = 0; i < md.descriptors[arm].sequence_ids.size(); ++i) {
        Descriptor d;
        d.kind = arm;
        d.values = md.descriptors[arm].values.row(static_cast<Eigen::Index>(i)).transpose();
        cache.emplace_back(md.descriptors[arm].sequence_ids[i], std::move(d));
      }
      save_descriptor_cache(config.out_dir / ("descriptors_" + mode + "_" +
                                              descriptor_kind_name(arm) + ".csv"),
                            cache);
      stages.note("descriptors " + mode + " " + std::string(descriptor_kind_name(arm)));
    }
  }

  const std::vector<FoldSpec> folds = make_folds(data.at(mode_order.front()).manifest, config.k_folds);

  // ------------------------------------------------- train/evaluate per fold
  ExperimentResult result;
  std::map<std::string, EmbeddingModel> model_cache;  // "<mode>/<arm>/<fold>"
  int mode_idx = 0;

  auto train_fold = [&](const std::string& mode, DescriptorKind arm, int fold,
                        int seed_mode_idx) -> const EmbeddingModel& {
    const std::string key = mode + "/" + descriptor_kind_name(arm) + "/" + std::to_string(fold);
    auto it = model_cache.find(key);
    if (it != model_cache.end()) return it->second;
    const ModeData& md = data.at(mode);
    const SequenceDescriptors& sd = md.descriptors.at(arm);
    const FoldSpec& fs_spec = folds[static_cast<std::size_t>(fold)];
    std::vector<int> train_rows;
    for (std::size_t i = 0; i < sd.surgery_ids.size(); ++i)
      if (fs_spec.train_surgeries.count(sd.surgery_ids[i])) train_rows.push_back(static_cast<int>(i));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(train_rows.size()), sd.values.cols());
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = sd.values.row(train_rows[i]);
      labels.push_back(sd.identity_ids[static_cast<std::size_t>(train_rows[i])]);
    }
    TrainConfig tc = config.train;
    tc.seed = mix(config.seed, static_cast<std::uint64_t>(seed_mode_idx),
                  static_cast<std::uint64_t>(arm_index(arm)), static_cast<std::uint64_t>(fold));
    TrainResult tr = train_embedding(x, labels, tc);
    save_checkpoint(config.out_dir / "checkpoints" /
                        (mode + "_" + descriptor_kind_name(arm) + "_fold" + std::to_string(fold) + ".json"),
                    tr.model, tc, arm);
    return model_cache.emplace(key, std::move(tr.model)).first->second;
  };

  auto eval_fold = [&](const EmbeddingModel& model, const std::string& test_mode, DescriptorKind arm,
                       int fold) {
    const SequenceDescriptors& sd = data.at(test_mode).descriptors.at(arm);
    const FoldSpec& fs_spec = folds[static_cast<std::size_t>(fold)];
    SequenceDescriptors test;
    std::vector<int> test_rows;
    for (std::size_t i = 0; i < sd.surgery_ids.size(); ++i)
      if (fs_spec.test_surgeries.count(sd.surgery_ids[i])) test_rows.push_back(static_cast<int>(i));
    test.values.resize(static_cast<Eigen::Index>(test_rows.size()), sd.values.cols());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      test.values.row(static_cast<Eigen::Index>(i)) = sd.values.row(test_rows[i]);
      test.sequence_ids.push_back(sd.sequence_ids[static_cast<std::size_t>(test_rows[i])]);
      test.identity_ids.push_back(sd.identity_ids[static_cast<std::size_t>(test_rows[i])]);
      test.surgery_ids.push_back(sd.surgery_ids[static_cast<std::size_t>(test_rows[i])]);
    }
    const auto [gal, probe] = gallery_probe_split(test);
    if (probe.empty()) raise(Errc::insufficient_data, "no probe sequences in fold " + std::to_string(fold));
    const Eigen::MatrixXd ge = embed_rows(model, test.values, gal);
    const Eigen::MatrixXd pe = embed_rows(model, test.values, probe);
    return evaluate_probe_gallery(pe, pick_labels(test.identity_ids, probe), ge,
                                  pick_labels(test.identity_ids, gal));
  };

  for (const std::string& mode : mode_order) {
    ModeResults mr;
    for (DescriptorKind arm : config.arms) {
      ArmResults ar;
      for (int f = 0; f < config.k_folds; ++f) {
        const EmbeddingModel& model = train_fold(mode, arm, f, mode_idx);
        ar.folds.push_back(eval_fold(model, mode, arm, f));
      }
      fill_mean_sd(ar);
      mr.arms.emplace(descriptor_kind_name(arm), std::move(ar));
    }

    // Statistics across arms (conditions) with folds as subjects.
    if (mr.arms.size() >= 2) {
      std::vector<std::string> arm_names;
      for (const auto& [name, ar] : mr.arms) arm_names.push_back(name);
      for (const std::string& metric : kMetricNames) {
        Eigen::MatrixXd table(static_cast<Eigen::Index>(arm_names.size()), config.k_folds);
        for (std::size_t a = 0; a < arm_names.size(); ++a)
          for (int f = 0; f < config.k_folds; ++f)
            table(static_cast<Eigen::Index>(a), f) = metric_value(mr.arms.at(arm_names[a]).folds[f], metric);
        mr.anova.emplace(metric, rm_anova(table));

        std::vector<ModeResults::Pairwise> tests;
        std::vector<double> ps;
        for (std::size_t a = 0; a < arm_names.size(); ++a)
          for (std::size_t b = a + 1; b < arm_names.size(); ++b) {
            std::vector<double> va, vb;
            for (int f = 0; f < config.k_folds; ++f) {
              va.push_back(metric_value(mr.arms.at(arm_names[a]).folds[f], metric));
              vb.push_back(metric_value(mr.arms.at(arm_names[b]).folds[f], metric));
            }
            ModeResults::Pairwise pw;
            pw.metric = metric;
            pw.arm_a = arm_names[a];
            pw.arm_b = arm_names[b];
            pw.test = paired_t_test(va, vb);
            tests.push_back(std::move(pw));
            ps.push_back(tests.back().test.p_value);
          }
        const std::vector<double> adj = bonferroni_adjust(ps);
        for (std::size_t i = 0; i < tests.size(); ++i) {
          tests[i].test.adjusted_p = adj[i];
          tests[i].marker = significance_marker(adj[i]);
          mr.pairwise.push_back(std::move(tests[i]));
        }
      }
    }
    result.modes.emplace(mode, std::move(mr));
    stages.note("train+eval " + mode);
    ++mode_idx;
  }

  // -------------------------------------------------------------- transfer
  for (const TransferSpec& spec : config.transfer) {
    ModeData& train_md = ensure_mode(spec.train_mode);
    (void)train_md;
    ensure_mode(spec.test_mode);
    const std::string train_tag = gen_tag_name(spec.train_mode);
    const std::string test_tag = gen_tag_name(spec.test_mode);
    for (const std::string& tag : {train_tag, test_tag}) {
      ModeData& md = data.at(tag);
      for (DescriptorKind arm : config.arms)
        if (!md.descriptors.count(arm))
          md.descriptors[arm] =
              extract_descriptors(md.sequences, arm, config.res_h, config.res_w, config.jobs);
    }
    const int train_mode_idx = [&] {
      const auto it = std::find(mode_order.begin(), mode_order.end(), train_tag);
      return it == mode_order.end() ? 100 + static_cast<int>(spec.train_mode)
                                    : static_cast<int>(it - mode_order.begin());
    }();

    TransferResults tr;
    tr.train_mode = train_tag;
    tr.test_mode = test_tag;
    for (DescriptorKind arm : config.arms) {
      ArmResults ar;
      for (int f = 0; f < config.k_folds; ++f) {
        const EmbeddingModel& model = train_fold(train_tag, arm, f, train_mode_idx);
        ar.folds.push_back(eval_fold(model, test_tag, arm, f));
      }
      fill_mean_sd(ar);
      tr.arms.emplace(descriptor_kind_name(arm), std::move(ar));
    }
    result.transfer.push_back(std::move(tr));
    stages.note("transfer " + train_tag + "->" + test_tag);
  }

  // --------------------------------------------------------------- saliency
  std::vector<std::array<double, 2 * kNumBones + 3>> audit_rows;  // entropy, feet_head_s, feet_head_a, s..., a...
  std::vector<std::string> audit_ids;
  if (config.saliency_sequences > 0) {
    SaliencyAudit audit;
    audit.mode = "confounded";
    if (!data.count(audit.mode)) audit.mode = mode_order.front();
    audit.arm = "appearance";
    DescriptorKind audit_arm = DescriptorKind::appearance;
    if (std::find(config.arms.begin(), config.arms.end(), audit_arm) == config.arms.end()) {
      audit_arm = config.arms.front();
      audit.arm = descriptor_kind_name(audit_arm);
    }
    const ModeData& md = data.at(audit.mode);
    const SequenceDescriptors& sd = md.descriptors.at(audit_arm);

    // Supervised identity classification head on the fold-0 training
    // descriptors (hard-binned, L2-normalized); the audit then back-propagates
    // its identity logits through the soft descriptor path on unseen fold-0
    // test sequences.
    const FoldSpec& fs0 = folds.front();
    const EmbeddingModel pipeline_model = make_normalizer_model(sd.values.cols());
    std::vector<int> train_rows;
    for (std::size_t i = 0; i < sd.surgery_ids.size(); ++i)
      if (fs0.train_surgeries.count(sd.surgery_ids[i])) train_rows.push_back(static_cast<int>(i));
    const Eigen::MatrixXd train_features = embed_rows(pipeline_model, sd.values, train_rows);
    std::vector<std::string> id_order;
    const Eigen::MatrixXd head =
        train_linear_probe(train_features, pick_labels(sd.identity_ids, train_rows), &id_order);

    std::vector<int> rows;
    for (std::size_t i = 0; i < sd.surgery_ids.size(); ++i)
      if (fs0.test_surgeries.count(sd.surgery_ids[i])) rows.push_back(static_cast<int>(i));
    if (static_cast<int>(rows.size()) > config.saliency_sequences)
      rows.resize(static_cast<std::size_t>(config.saliency_sequences));

    const auto extractor = audit_arm == DescriptorKind::appearance
                               ? make_appearance_extractor({HistogramBinning::soft, 0.05, 0.05})
                               : make_geometric_extractor(md.sequences.front().fps);

    audit.n_sequences = static_cast<int>(rows.size());
    audit_rows.resize(rows.size());
    audit_ids.resize(rows.size());
    std::vector<RegionShares> shares(rows.size());
    std::vector<double> entropies(rows.size());
    parallel_for(rows.size(), config.jobs, [&](std::size_t i) {
      const PersonSequence& seq = md.sequences[static_cast<std::size_t>(rows[i])];
      const std::vector<ProjectedImages> imgs = render_sequence(seq, config.res_h, config.res_w);
      const auto cit = std::find(id_order.begin(), id_order.end(), seq.identity_id);
      LogitObjective obj{head, static_cast<int>(cit - id_order.begin())};
      const std::vector<Eigen::MatrixXd> frame_maps =
          input_gradient_frames(*extractor, pipeline_model, imgs, SaliencyObjective{obj});
      shares[i] = region_attribution(frame_maps, imgs);

      SaliencyMap agg;
      agg.weights = Eigen::MatrixXd::Zero(config.res_h, config.res_w);
      for (const auto& m : frame_maps) agg.weights += m;
      const double total = agg.weights.sum();
      if (total > 0.0) agg.weights /= total;
      else agg.all_zero = true;
      entropies[i] = map_entropy(agg);
      audit_ids[i] = seq.sequence_id;

      if (i < 8) {  // a few visual artifacts
        const std::size_t mid = imgs.size() / 2;
        double peak = 0.0;
        for (const auto& m : frame_maps) peak = std::max(peak, m.maxCoeff());
        write_overlay_ppm(imgs[mid], frame_maps[mid], peak,
                          config.out_dir / "overlays" / (seq.sequence_id + ".ppm"));
        write_depth_pgm(imgs[mid], config.out_dir / "depth" / (seq.sequence_id + ".pgm"));
      }
    });

    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& row = audit_rows[i];
      row[0] = entropies[i];
      double fh_s = 0.0, fh_a = 0.0;
      for (int p = 0; p < kNumBones; ++p) {
        const double s = shares[i].saliency_share.count(p) ? shares[i].saliency_share.at(p) : 0.0;
        const double a = shares[i].area_share.count(p) ? shares[i].area_share.at(p) : 0.0;
        row[3 + p] = s;
        row[3 + kNumBones + p] = a;
        if (p == kHead || p == kShinFootL || p == kShinFootR) {
          fh_s += s;
          fh_a += a;
        }
      }
      row[1] = fh_s;
      row[2] = fh_a;
    }
    std::vector<double> col(rows.size());
    auto col_mean = [&](int c) {
      for (std::size_t i = 0; i < rows.size(); ++i) col[i] = audit_rows[i][static_cast<std::size_t>(c)];
      return pairwise_mean(col);
    };
    audit.entropy_mean = col_mean(0);
    audit.feet_head_saliency_share = col_mean(1);
    audit.feet_head_area_share = col_mean(2);
    for (int p = 0; p < kNumBones; ++p) {
      audit.part_saliency_share[p] = col_mean(3 + p);
      audit.part_area_share[p] = col_mean(3 + kNumBones + p);
    }
    result.saliency = std::move(audit);
    stages.note("saliency");
  }

  // ---------------------------------------------------------------- reports
  {
    std::ofstream csv(config.out_dir / "metrics.csv", std::ios::binary);
    if (!csv) raise(Errc::io_error, "cannot write metrics.csv");
    csv << "mode,arm,fold,metric,value\n";
    for (const std::string& mode : mode_order) {
      const ModeResults& mr = result.modes.at(mode);
      for (const auto& [arm, ar] : mr.arms)
        for (std::size_t f = 0; f < ar.folds.size(); ++f)
          for (const std::string& m : kMetricNames)
            csv << mode << ',' << arm << ',' << f << ',' << m << ','
                << csv_double(metric_value(ar.folds[f], m)) << '\n';
    }
    for (const TransferResults& tr : result.transfer) {
      const std::string mode = "transfer_" + tr.train_mode + "_to_" + tr.test_mode;
      for (const auto& [arm, ar] : tr.arms)
        for (std::size_t f = 0; f < ar.folds.size(); ++f)
          for (const std::string& m : kMetricNames)
            csv << mode << ',' << arm << ',' << f << ',' << m << ','
                << csv_double(metric_value(ar.folds[f], m)) << '\n';
    }
  }

  if (result.saliency) {
    std::ofstream csv(config.out_dir / "saliency_audit.csv", std::ios::binary);
    if (!csv) raise(Errc::io_error, "cannot write saliency_audit.csv");
    csv << "sequence_id,entropy,feet_head_saliency_share,feet_head_area_share";
    for (int p = 0; p < kNumBones; ++p) csv << ",s_" << bone_name(p);
    for (int p = 0; p < kNumBones; ++p) csv << ",a_" << bone_name(p);
    csv << '\n';
    for (std::size_t i = 0; i < audit_rows.size(); ++i) {
      csv << audit_ids[i];
      for (double v : audit_rows[i]) csv << ',' << csv_double(v);
      csv << '\n';
    }

    std::ofstream rs(config.out_dir / "region_shares.csv", std::ios::binary);
    if (!rs) raise(Errc::io_error, "cannot write region_shares.csv");
    rs << "part,saliency_share,area_share\n";
    for (int p = 0; p < kNumBones; ++p)
      rs << bone_name(p) << ',' << csv_double(result.saliency->part_saliency_share.at(p)) << ','
         << csv_double(result.saliency->part_area_share.at(p)) << '\n';
  }

  json summary;
  summary["v"] = 1;
  {
    json echo;
    echo["seed"] = config.seed;
    echo["k_folds"] = config.k_folds;
    echo["resolution"] = json::array({config.res_h, config.res_w});
    json arms = json::array();
    for (DescriptorKind a : config.arms) arms.push_back(descriptor_kind_name(a));
    echo["arms"] = arms;
    if (config.synthetic) {
      const SyntheticSpec& s = *config.synthetic;
      json modes = json::array();
      for (GenTag t : s.modes) modes.push_back(gen_tag_name(t));
      echo["dataset"] = {{"synthetic",
                          {{"n_identities", s.n_identities},
                           {"n_surgeries", s.n_surgeries},
                           {"seqs_per_surgery", s.seqs_per_surgery},
                           {"n_frames", s.n_frames},
                           {"fps", s.fps},
                           {"noise_sd_m", s.noise_sd_m},
                           {"modes", modes}}}};
    } else {
      echo["dataset"] = {{"manifest", config.manifest_path->string()}};
    }
    echo["train"] = {{"margin", config.train.margin},
                     {"learning_rate", config.train.learning_rate},
                     {"epochs", config.train.epochs},
                     {"batch_p", config.train.batch_p},
                     {"batch_k", config.train.batch_k},
                     {"hidden", config.train.hidden},
                     {"embed_dim", config.train.embed_dim}};
    summary["config"] = echo;
  }

  json modes_json;
  for (const std::string& mode : mode_order) {
    const ModeResults& mr = result.modes.at(mode);
    json mj;
    json arms_json;
    for (const auto& [arm, ar] : mr.arms) arms_json[arm] = arm_results_json(ar);

    // Table-1 style markers: best arm per metric unmarked, others marked by
    // the adjusted pairwise test against the best arm.
    for (const std::string& metric : kMetricNames) {
      std::string best;
      double best_val = -1.0;
      for (const auto& [arm, ar] : mr.arms)
        if (ar.mean.at(metric) > best_val) {
          best_val = ar.mean.at(metric);
          best = arm;
        }
      for (const auto& [arm, ar] : mr.arms) {
        std::string marker = "best";
        if (arm != best) {
          marker = "ns";
          for (const auto& pw : mr.pairwise)
            if (pw.metric == metric &&
                ((pw.arm_a == arm && pw.arm_b == best) || (pw.arm_a == best && pw.arm_b == arm)))
              marker = pw.marker;
        }
        arms_json[arm]["marker"][metric] = marker;
        arms_json[arm]["display_marked"][metric] =
            arms_json[arm]["display"][metric].get<std::string>() + (marker == "best" ? "" : marker);
      }
    }
    mj["arms"] = arms_json;

    json anova_json;
    for (const std::string& metric : kMetricNames)
      if (mr.anova.count(metric)) anova_json[metric] = stat_json(mr.anova.at(metric), true);
    mj["anova"] = anova_json;

    json pw_json = json::array();
    for (const auto& pw : mr.pairwise) {
      json t = stat_json(pw.test, false);
      t["metric"] = pw.metric;
      t["arm_a"] = pw.arm_a;
      t["arm_b"] = pw.arm_b;
      t["marker"] = pw.marker;
      pw_json.push_back(t);
    }
    mj["pairwise"] = pw_json;
    modes_json[mode] = mj;
  }
  summary["modes"] = modes_json;

  json transfer_json = json::array();
  for (const TransferResults& tr : result.transfer) {
    json tj;
    tj["train_mode"] = tr.train_mode;
    tj["test_mode"] = tr.test_mode;
    json arms_json;
    for (const auto& [arm, ar] : tr.arms) arms_json[arm] = arm_results_json(ar);
    tj["arms"] = arms_json;
    transfer_json.push_back(tj);
  }
  summary["transfer"] = transfer_json;

  if (result.saliency) {
    const SaliencyAudit& a = *result.saliency;
    json sj;
    sj["mode"] = a.mode;
    sj["arm"] = a.arm;
    sj["n_sequences"] = a.n_sequences;
    sj["feet_head_saliency_share"] = a.feet_head_saliency_share;
    sj["feet_head_area_share"] = a.feet_head_area_share;
    sj["entropy_mean"] = a.entropy_mean;
    json parts;
    for (int p = 0; p < kNumBones; ++p)
      parts[bone_name(p)] =
          json::array({a.part_saliency_share.at(p), a.part_area_share.at(p)});
    sj["part_shares"] = parts;
    summary["saliency"] = sj;
  }

  result.summary_json = summary.dump(2) + "\n";
  {
    std::ofstream out(config.out_dir / "summary.json", std::ios::binary);
    if (!out) raise(Errc::io_error, "cannot write summary.json");
    out << result.summary_json;
  }
  stages.note("reports");
  return result;
}

}  // namespace geomreid
