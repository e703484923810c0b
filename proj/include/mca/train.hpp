#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mca/augment.hpp"
#include "mca/eval.hpp"
#include "mca/heatmap.hpp"
#include "mca/network.hpp"
#include "mca/synth.hpp"

namespace mca {

// On-disk dataset layout: one directory holding annotations.txt plus one
// <id>.ppm pixmap per record.
struct Dataset {
  std::vector<Image> images;
  std::vector<PoseAnnotation> annotations;

  std::size_t size() const { return images.size(); }
};

inline void save_dataset(const std::string& dir,
                         const std::vector<SynthSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<PoseAnnotation> anns;
  for (const auto& s : samples) {
    save_ppm((fs::path(dir) / (s.annotation.id + ".ppm")).string(), s.image);
    anns.push_back(s.annotation);
  }
  save_annotations(anns, (fs::path(dir) / "annotations.txt").string());
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.annotations =
      load_annotations((fs::path(dir) / "annotations.txt").string());
  MCA_CHECK(!ds.annotations.empty(), "dataset ", dir, " has no records");
  for (const auto& ann : ds.annotations) {
    Image img = load_ppm((fs::path(dir) / (ann.id + ".ppm")).string());
    ann.check(img.height, img.width);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

struct TrainSettings {
  std::size_t steps = 300;
  std::size_t batch_size = 4;
  double lr = 2.5e-4;
  double sigma = 1.0;            // ground-truth heatmap spread
  bool augment = true;
  AugmentParams aug;
  std::size_t val_every = 50;    // 0 disables periodic validation
  std::size_t checkpoint_every = 0;  // 0 keeps only the final checkpoint
  double pck_threshold = 0.2;

  std::string echo() const {
    std::ostringstream os;
    os.precision(17);
    os << "steps=" << steps << "\n"
       << "batch_size=" << batch_size << "\n"
       << "lr=" << lr << "\n"
       << "sigma=" << sigma << "\n"
       << "augment=" << int(augment) << "\n"
       << "val_every=" << val_every << "\n"
       << "checkpoint_every=" << checkpoint_every << "\n"
       << "pck_threshold=" << pck_threshold << "\n";
    return os.str();
  }
};

struct TrainResult {
  real initial_loss = 0;
  real final_loss = 0;
  double final_val_pck = -1;     // -1 when validation never ran
  std::string checkpoint_path;
  std::string metrics_path;
};

namespace detail {

// Validation PCK over the unaugmented set: eval mode, final-stack decode.
inline double validation_pck(Network& net, const Dataset& ds,
                             double threshold) {
  bool was_training = net.training();
  net.set_training(false);
  std::vector<Prediction> preds;
  for (const auto& img : ds.images)
    preds.push_back(decode_heatmaps(predict_heatmaps(net, img))[0]);
  net.set_training(was_training);
  return pck(preds, ds.annotations, threshold).mean;
}

}  // namespace detail

// The full training loop. Writes into `run_dir`:
//   config.txt    network config echo + train settings echo
//   metrics.csv   step, total loss, per-stack losses, grad norm, and the
//                 validation rate on steps where validation ran
//   timing.txt    wall-clock seconds, kept out of metrics.csv so identical
//                 seeds reproduce that file byte for byte
//   checkpoint.mca  final parameters (plus periodic step-tagged copies)
inline TrainResult train_loop(Network& net, const Dataset& ds,
                              const TrainSettings& settings,
                              const std::string& run_dir) {
  namespace fs = std::filesystem;
  MCA_CHECK(settings.steps >= 1, "train: steps must be >= 1");
  MCA_CHECK(settings.batch_size >= 1, "train: batch size must be >= 1");
  MCA_CHECK(settings.lr >= 0, "train: learning rate must be >= 0");
  std::size_t input = net.config().input_size;
  for (const auto& img : ds.images)
    MCA_CHECK(img.height == input && img.width == input, "train: dataset has ",
              img.height, "x", img.width, " images, model wants ", input, "x",
              input);
  MCA_CHECK(ds.annotations[0].keypoints.size() == net.config().parts,
            "train: dataset has ", ds.annotations[0].keypoints.size(),
            " parts, model wants ", net.config().parts);
  fs::create_directories(run_dir);

  {
    std::ofstream cfg(fs::path(run_dir) / "config.txt");
    cfg << net.config().echo() << settings.echo();
  }

  std::ofstream metrics(fs::path(run_dir) / "metrics.csv");
  metrics.precision(17);
  metrics << "step,total_loss";
  for (std::size_t s = 0; s < net.config().stacks; ++s)
    metrics << ",loss_stack" << s;
  metrics << ",grad_norm,val_pck\n";

  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(net.config().seed);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  RMSprop opt(real(settings.lr));
  net.set_training(true);

  TrainResult result;
  double last_val = -1;
  for (std::size_t step = 1; step <= settings.steps; ++step) {
    std::vector<Image> batch_images;
    std::vector<Tensor> batch_targets;
    std::vector<real> target_data;
    for (std::size_t b = 0; b < settings.batch_size; ++b) {
      std::size_t i = pick(rng);
      Image img = ds.images[i];
      PoseAnnotation ann = ds.annotations[i];
      if (settings.augment) augment(img, ann, settings.aug, rng);
      Tensor gt = render_gt_heatmaps(ann, net.config().heatmap_size(),
                                     settings.sigma);
      batch_images.push_back(std::move(img));
      target_data.insert(target_data.end(), gt.data().begin(),
                         gt.data().end());
    }
    Tensor images = batch_tensor(batch_images);
    Tensor target = Tensor::from_data(
        {settings.batch_size, net.config().parts, net.config().heatmap_size(),
         net.config().heatmap_size()},
        std::move(target_data));

    TrainMetrics m = net.train_step(images, target, opt);
    if (step == 1) result.initial_loss = m.total_loss;
    result.final_loss = m.total_loss;

    bool validate = settings.val_every > 0 &&
                    (step % settings.val_every == 0 || step == settings.steps);
    if (validate) {
      last_val = detail::validation_pck(net, ds, settings.pck_threshold);
      result.final_val_pck = last_val;
    }

    metrics << step << "," << double(m.total_loss);
    for (real l : m.per_stack_loss) metrics << "," << double(l);
    metrics << "," << double(m.grad_norm) << ",";
    if (validate) metrics << last_val;
    metrics << "\n";

    if (settings.checkpoint_every > 0 &&
        step % settings.checkpoint_every == 0 && step != settings.steps) {
      net.save((fs::path(run_dir) /
                ("checkpoint_step" + std::to_string(step) + ".mca"))
                   .string());
    }
  }

  result.checkpoint_path = (fs::path(run_dir) / "checkpoint.mca").string();
  result.metrics_path = (fs::path(run_dir) / "metrics.csv").string();
  net.save(result.checkpoint_path);
  metrics.close();

  auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0);
  std::ofstream timing(fs::path(run_dir) / "timing.txt");
  timing << "wall_seconds " << dt.count() << "\n";
  return result;
}

}  // namespace mca
