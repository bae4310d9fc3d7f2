#include "data/dataset.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/errors.h"

namespace fs = std::filesystem;

namespace pagetext {

std::string escape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char n = s[i + 1];
      if (n == '\\') {
        out.push_back('\\');
        ++i;
        continue;
      }
      if (n == 't') {
        out.push_back('\t');
        ++i;
        continue;
      }
      if (n == 'n') {
        out.push_back('\n');
        ++i;
        continue;
      }
    }
    out.push_back(s[i]);
  }
  return out;
}

DatasetWriter::DatasetWriter(const std::string& dir, const std::string& format)
    : dir_(dir), format_(format) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw io_error("cannot create dataset directory: " + dir_);
  index_ = "filename\ttranscript\n";
}

void DatasetWriter::add(const Sample& s) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06lld.%s", static_cast<long long>(count_),
                format_.c_str());
  write_image(s.image, dir_ + "/" + name);
  char gt[32];
  std::snprintf(gt, sizeof(gt), "%06lld.gt.txt", static_cast<long long>(count_));
  std::ofstream f(dir_ + "/" + gt, std::ios::binary);
  if (!f) throw io_error(std::string("cannot write transcript sidecar: ") + gt);
  f << s.transcript;
  index_ += std::string(name) + "\t" + escape_field(s.transcript) + "\n";
  ++count_;
}

void DatasetWriter::finish() {
  if (finished_) return;
  std::ofstream f(dir_ + "/index.tsv", std::ios::binary);
  if (!f) throw io_error("cannot write dataset index: " + dir_ + "/index.tsv");
  f << index_;
  finished_ = true;
}

DatasetWriter::~DatasetWriter() {
  try {
    finish();
  } catch (...) {
    // destructor must not throw; finish() explicitly where failure matters
  }
}

void export_dataset(const std::vector<Sample>& samples, const std::string& dir,
                    const std::string& format) {
  DatasetWriter w(dir, format);
  for (const Sample& s : samples) w.add(s);
  w.finish();
}

std::vector<DatasetEntry> read_dataset_index(const std::string& dir) {
  std::vector<DatasetEntry> out;
  fs::path index = fs::path(dir) / "index.tsv";
  if (fs::exists(index)) {
    std::ifstream f(index, std::ios::binary);
    if (!f) throw io_error("cannot read dataset index: " + index.string());
    std::string line;
    bool first = true;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (first) {
        first = false;
        if (line != "filename\ttranscript") {
          throw format_error("dataset index: missing header line");
        }
        continue;
      }
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw format_error("dataset index: malformed line " + std::to_string(lineno));
      }
      DatasetEntry e;
      e.filename = line.substr(0, tab);
      e.transcript = unescape_field(line.substr(tab + 1));
      out.push_back(std::move(e));
    }
    return out;
  }
  if (!fs::is_directory(dir)) throw io_error("dataset directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    std::string ext = entry.path().extension().string();
    if (ext != ".png" && ext != ".pgm") continue;
    DatasetEntry e;
    e.filename = name;
    fs::path gt = entry.path();
    gt.replace_extension("");
    gt += ".gt.txt";
    if (fs::exists(gt)) {
      std::ifstream f(gt, std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      e.transcript = ss.str();
    } else {
      e.has_transcript = false;
    }
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.filename < b.filename; });
  return out;
}

}  // namespace pagetext
