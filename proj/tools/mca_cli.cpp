// Command-line front end: dataset synthesis, training, evaluation,
// inference, and attention-map export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mca/eval.hpp"
#include "mca/train.hpp"

namespace fs = std::filesystem;
using namespace mca;

namespace {

// Errors print as "error: <category>: <detail>" on stderr so scripts can
// dispatch on the category.
struct CliError : std::runtime_error {
  std::string category;
  CliError(std::string cat, const std::string& what)
      : std::runtime_error(what), category(std::move(cat)) {}
};

void require_empty_or_force(const std::string& dir, bool force) {
  if (!fs::exists(dir)) return;
  if (fs::is_directory(dir) && fs::directory_iterator(dir) ==
                                   fs::directory_iterator())
    return;
  if (!force)
    throw CliError("io", "output '" + dir +
                             "' exists and is not empty; pass --force to "
                             "overwrite");
}

// key=value lines; '#' starts a comment. Network keys plus the training
// keys understood by TrainSettings.
void apply_config_file(const std::string& path, NetworkConfig& net,
                       TrainSettings& train) {
  std::ifstream is(path);
  if (!is) throw CliError("io", "cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace((unsigned char)line.back()))
      line.pop_back();
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CliError("config", path + ":" + std::to_string(lineno) +
                                   ": expected key=value");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "steps") train.steps = std::stoull(val);
      else if (key == "batch_size") train.batch_size = std::stoull(val);
      else if (key == "lr") train.lr = std::stod(val);
      else if (key == "sigma") train.sigma = std::stod(val);
      else if (key == "augment") train.augment = std::stoull(val) != 0;
      else if (key == "val_every") train.val_every = std::stoull(val);
      else if (key == "checkpoint_every")
        train.checkpoint_every = std::stoull(val);
      else if (key == "pck_threshold") train.pck_threshold = std::stod(val);
      else net.apply(key, val);
    } catch (const Error& e) {
      throw CliError("config",
                     path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw CliError("config", path + ":" + std::to_string(lineno) +
                                   ": bad value for '" + key + "'");
    }
  }
}

Network load_network(const std::string& checkpoint) {
  NetworkConfig cfg = NetworkConfig::from_echo(
      read_checkpoint_config(checkpoint));
  Network net(cfg);
  net.load(checkpoint);
  net.set_training(false);
  return net;
}

std::vector<double> tta_scales(bool tta) {
  if (!tta) return {1.0};
  // six-scale pyramid around the training resolution
  return {0.7, 0.85, 1.0, 1.15, 1.3, 1.45};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw CliError("io", "cannot open '" + path.string() + "'");
  os << text;
}

int cmd_synth(const std::string& out, std::size_t count, SynthSpec spec,
              bool force) {
  if (count == 0) throw CliError("usage", "--count must be positive");
  require_empty_or_force(out, force);
  auto samples = synth_generate(spec, count);
  save_dataset(out, samples);
  std::cout << "wrote " << samples.size() << " samples ("
            << spec.image_size << "x" << spec.image_size << ", seed "
            << spec.seed << ") to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out,
              NetworkConfig cfg, const TrainSettings& settings, bool force) {
  require_empty_or_force(out, force);
  Dataset ds = load_dataset(data);
  cfg.parts = ds.annotations[0].keypoints.size();
  cfg.input_size = ds.images[0].height;
  cfg.validate();
  Network net(cfg);
  TrainResult result = train_loop(net, ds, settings, out);
  std::cout << "trained " << settings.steps << " steps on " << ds.size()
            << " samples\n"
            << "initial loss " << double(result.initial_loss)
            << ", final loss " << double(result.final_loss) << "\n";
  if (result.final_val_pck >= 0)
    std::cout << "final train-set rate " << result.final_val_pck << "\n";
  std::cout << "checkpoint: " << result.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& checkpoint,
             const std::string& out, bool tta, bool force) {
  require_empty_or_force(out, force);
  Dataset ds = load_dataset(data);
  Network net = load_network(checkpoint);
  if (ds.annotations[0].keypoints.size() != net.config().parts)
    throw CliError("config",
                   "dataset has " +
                       std::to_string(ds.annotations[0].keypoints.size()) +
                       " parts but checkpoint expects " +
                       std::to_string(net.config().parts));
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < ds.size(); ++i)
    preds.push_back(tta_predict(net, ds.images[i], tta_scales(tta), tta,
                                ds.annotations[i].lr_pairs));
  fs::create_directories(out);
  std::vector<std::string> names;
  for (std::size_t p = 0; p < net.config().parts; ++p)
    names.push_back("part" + std::to_string(p));
  auto p = pck(preds, ds.annotations);
  auto h = pckh(preds, ds.annotations);
  write_text(fs::path(out) / "pck.csv", p.to_csv(names));
  write_text(fs::path(out) / "pckh.csv", h.to_csv(names));
  std::cout << "pck@" << p.threshold << " mean " << p.mean << "\n"
            << "pckh@" << h.threshold << " mean " << h.mean << "\n";
  return 0;
}

int cmd_infer(const std::string& image_path, const std::string& checkpoint,
              const std::string& out, bool tta) {
  Network net = load_network(checkpoint);
  Image img = load_ppm(image_path);
  if (img.height != net.config().input_size ||
      img.width != net.config().input_size)
    throw CliError("config", "image is " + std::to_string(img.width) + "x" +
                                 std::to_string(img.height) +
                                 " but checkpoint expects " +
                                 std::to_string(net.config().input_size));
  Prediction pred = tta_predict(net, img, tta_scales(tta), tta, {});
  std::ostringstream os;
  os.precision(17);
  for (std::size_t p = 0; p < pred.keypoints.size(); ++p)
    os << "part" << p << " " << pred.keypoints[p].x << " "
       << pred.keypoints[p].y << " " << pred.confidence[p] << "\n";
  if (out.empty())
    std::cout << os.str();
  else
    write_text(out, os.str());
  return 0;
}

void export_map(const fs::path& path, const AttentionMap& map) {
  const Shape& s = map.values.shape();
  save_pgm_scaled(path.string(), map.values.data(), s[2], s[3]);
}

int cmd_export_attention(const std::string& image_path,
                         const std::string& checkpoint,
                         const std::string& out, bool part_maps, bool force) {
  require_empty_or_force(out, force);
  Network net = load_network(checkpoint);
  if (part_maps && !net.config().part_attention)
    throw CliError("config",
                   "part maps requested but the checkpoint was trained "
                   "without part attention");
  if (!net.config().multi_semantics)
    throw CliError("config",
                   "checkpoint was trained without attention; nothing to "
                   "export");
  Image img = load_ppm(image_path);
  if (img.height != net.config().input_size ||
      img.width != net.config().input_size)
    throw CliError("config", "image size does not match the checkpoint");
  auto outputs = net.forward(img.to_tensor());
  fs::create_directories(out);
  std::size_t written = 0;
  for (std::size_t s = 0; s < outputs.size(); ++s) {
    std::string stem = "stack" + std::to_string(s);
    if (outputs[s].holistic_map) {
      export_map(fs::path(out) / (stem + "_holistic.pgm"),
                 *outputs[s].holistic_map);
      ++written;
    }
    if (outputs[s].refined_map) {
      export_map(fs::path(out) / (stem + "_refined.pgm"),
                 *outputs[s].refined_map);
      ++written;
    }
    if (part_maps)
      for (std::size_t p = 0; p < outputs[s].part_maps.size(); ++p) {
        export_map(fs::path(out) /
                       (stem + "_part" + std::to_string(p) + ".pgm"),
                   outputs[s].part_maps[p]);
        ++written;
      }
  }
  std::cout << "wrote " << written << " attention maps to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-context attention pose network"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  std::size_t synth_count = 8;
  SynthSpec spec;
  bool synth_force = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of samples");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--size", spec.image_size, "image side length");
  synth->add_option("--clutter", spec.clutter_density,
                    "background clutter density");
  synth->add_flag("--force", synth_force, "overwrite a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "train a network");
  std::string train_data, train_out, train_config, train_variant;
  NetworkConfig net_cfg;
  TrainSettings train_settings;
  bool train_force = false;
  bool no_augment = false;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--variant", train_variant,
                    "ablation variant (BL, BL+MS, BL+MS+HRU, BL+MS+HRU+MR, "
                    "BL+MS+HRU+MR+HP)");
  auto* lr_opt = train->add_option("--lr", train_settings.lr,
                                   "learning rate");
  auto* steps_opt =
      train->add_option("--steps", train_settings.steps, "training steps");
  auto* batch_opt = train->add_option("--batch", train_settings.batch_size,
                                      "batch size");
  auto* seed_opt = train->add_option("--seed", net_cfg.seed,
                                     "initialization and shuffling seed");
  auto* stacks_opt =
      train->add_option("--stacks", net_cfg.stacks, "hourglass stacks");
  auto* channels_opt =
      train->add_option("--channels", net_cfg.channels, "feature channels");
  auto* val_opt = train->add_option("--val-every", train_settings.val_every,
                                    "validation interval (0 disables)");
  train->add_flag("--no-augment", no_augment, "disable data augmentation");
  train->add_flag("--force", train_force, "overwrite a non-empty directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_out;
  bool eval_tta = false, eval_force = false;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "output directory")->required();
  eval->add_flag("--tta", eval_tta, "scale-pyramid and flip averaging");
  eval->add_flag("--force", eval_force, "overwrite a non-empty directory");

  // infer
  auto* infer = app.add_subcommand("infer", "predict keypoints for an image");
  std::string infer_image, infer_ckpt, infer_out;
  bool infer_tta = false;
  infer->add_option("--image", infer_image, "input pixmap")->required();
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--out", infer_out, "output file (default stdout)");
  infer->add_flag("--tta", infer_tta, "scale-pyramid and flip averaging");

  // export-attention
  auto* exp = app.add_subcommand("export-attention",
                                 "write attention maps as graymaps");
  std::string exp_image, exp_ckpt, exp_out;
  bool exp_parts = false, exp_force = false;
  exp->add_option("--image", exp_image, "input pixmap")->required();
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_flag("--part-maps", exp_parts, "also export per-part maps");
  exp->add_flag("--force", exp_force, "overwrite a non-empty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) {
      return cmd_synth(synth_out, synth_count, spec, synth_force);
    }
    if (*train) {
      if (!train_config.empty())
        apply_config_file(train_config, net_cfg, train_settings);
      // flags win over the config file
      if (!train_variant.empty()) {
        try {
          net_cfg.apply_variant(train_variant);
        } catch (const Error& e) {
          throw CliError("usage", e.what());
        }
      }
      // flag values beat the config file
      if (!lr_opt->empty()) train_settings.lr = lr_opt->as<double>();
      if (!steps_opt->empty())
        train_settings.steps = steps_opt->as<std::size_t>();
      if (!batch_opt->empty())
        train_settings.batch_size = batch_opt->as<std::size_t>();
      if (!seed_opt->empty()) net_cfg.seed = seed_opt->as<std::uint64_t>();
      if (!stacks_opt->empty())
        net_cfg.stacks = stacks_opt->as<std::size_t>();
      if (!channels_opt->empty())
        net_cfg.channels = channels_opt->as<std::size_t>();
      if (!val_opt->empty())
        train_settings.val_every = val_opt->as<std::size_t>();
      if (no_augment) train_settings.augment = false;
      return cmd_train(train_data, train_out, net_cfg, train_settings,
                       train_force);
    }
    if (*eval)
      return cmd_eval(eval_data, eval_ckpt, eval_out, eval_tta, eval_force);
    if (*infer) return cmd_infer(infer_image, infer_ckpt, infer_out,
                                 infer_tta);
    if (*exp)
      return cmd_export_attention(exp_image, exp_ckpt, exp_out, exp_parts,
                                  exp_force);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.category << ": " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
