// Command-line front end over the pagetext C API.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime error, 3 partial
// failure (some items failed, the rest completed).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pagetext.h"

namespace fs = std::filesystem;

namespace {

void log_line(const char* line, void* user) {
  (void)user;
  std::cout << line << "\n";
  std::cout.flush();
}

int exit_code(pagetext_status st) {
  switch (st) {
    case PAGETEXT_OK: return 0;
    case PAGETEXT_ERR_ARGUMENT: return 1;
    case PAGETEXT_ERR_IO:
    case PAGETEXT_ERR_FORMAT:
    case PAGETEXT_ERR_RUNTIME: return 2;
    case PAGETEXT_ERR_PARTIAL: return 3;
  }
  return 2;
}

int report_failure(pagetext_status st) {
  std::cerr << "error (" << pagetext_status_name(st) << "): " << pagetext_last_error() << "\n";
  return exit_code(st);
}

std::string escape_field(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\t') out += "\\t";
    else if (c == '\n') out += "\\n";
    else out.push_back(c);
  }
  return out;
}

struct Engine {
  pagetext_engine* handle = nullptr;
  ~Engine() { pagetext_engine_close(handle); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pagetext: synthetic page generation, training, transcription & evaluation"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  bool has_seed = false;
  app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
    has_seed = true;
  });

  std::string config_path, out_dir, ckpt, image_path, dir_path, data_dir, report_path;
  long count = 0;
  bool normalize = false;

  CLI::App* gendata = app.add_subcommand("gendata", "write synthetic samples to a dataset dir");
  gendata->add_option("--config", config_path, "config file")->required();
  gendata->add_option("--count", count, "number of samples")->required();
  gendata->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model from streamed synthetic data");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "checkpoint/log directory")->required();

  CLI::App* predict = app.add_subcommand("predict", "transcribe images with a checkpoint");
  predict->add_option("--ckpt", ckpt, "checkpoint file")->required();
  auto* opt_image = predict->add_option("--image", image_path, "single image");
  auto* opt_dir = predict->add_option("--dir", dir_path, "directory of images");
  opt_image->excludes(opt_dir);
  predict->add_flag("--normalize", normalize, "apply comparison normalization");

  CLI::App* eval = app.add_subcommand("eval", "decode a dataset and write a CER report");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--report", report_path, "report output path")->required();
  eval->add_flag("--normalize", normalize, "apply comparison normalization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (gendata->parsed()) {
    pagetext_status st =
        pagetext_generate(config_path.c_str(), out_dir.c_str(), count, seed, has_seed, log_line,
                          nullptr);
    return st == PAGETEXT_OK ? 0 : report_failure(st);
  }

  if (train->parsed()) {
    pagetext_status st =
        pagetext_train(config_path.c_str(), out_dir.c_str(), seed, has_seed, log_line, nullptr);
    return st == PAGETEXT_OK ? 0 : report_failure(st);
  }

  if (predict->parsed()) {
    if (image_path.empty() && dir_path.empty()) {
      std::cerr << "predict: need --image or --dir\n";
      return 1;
    }
    Engine engine;
    pagetext_status st = pagetext_engine_open(ckpt.c_str(), &engine.handle);
    if (st != PAGETEXT_OK) return report_failure(st);

    if (!image_path.empty()) {
      char* text = nullptr;
      st = pagetext_transcribe_file(engine.handle, image_path.c_str(), normalize ? 1 : 0, &text,
                                    nullptr);
      if (st != PAGETEXT_OK) return report_failure(st);
      std::cout << text << "\n";
      pagetext_free(text);
      return 0;
    }

    std::vector<std::string> names;
    try {
      for (const auto& entry : fs::directory_iterator(dir_path)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm") names.push_back(entry.path().filename().string());
      }
    } catch (const fs::filesystem_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    std::sort(names.begin(), names.end());
    bool any_failed = false;
    for (const std::string& name : names) {
      char* text = nullptr;
      std::string path = dir_path + "/" + name;
      st = pagetext_transcribe_file(engine.handle, path.c_str(), normalize ? 1 : 0, &text,
                                    nullptr);
      if (st != PAGETEXT_OK) {
        std::cerr << "error on " << name << ": " << pagetext_last_error() << "\n";
        any_failed = true;
        continue;
      }
      std::cout << name << "\t" << escape_field(text) << "\n";
      pagetext_free(text);
    }
    return any_failed ? 3 : 0;
  }

  if (eval->parsed()) {
    Engine engine;
    pagetext_status st = pagetext_engine_open(ckpt.c_str(), &engine.handle);
    if (st != PAGETEXT_OK) return report_failure(st);
    double mean = 0, corpus = 0;
    st = pagetext_evaluate(engine.handle, data_dir.c_str(), normalize ? 1 : 0,
                           report_path.c_str(), log_line, nullptr, &mean, &corpus);
    if (st == PAGETEXT_OK) return 0;
    if (st == PAGETEXT_ERR_PARTIAL) {
      std::cerr << "warning: " << pagetext_last_error() << "\n";
      return 3;
    }
    return report_failure(st);
  }

  return 1;
}
