#pragma once

#include <string>
#include <vector>

#include "data/render.h"

namespace pagetext {

struct DatasetItem {
  std::string filename;  // relative to the dataset directory
  std::string transcript;
};

// tab/newline/backslash escaping used in index.tsv and predict output
std::string escape_field(const std::string& s);
std::string unescape_field(const std::string& s);

// Writes images (000000.png / .pgm), .gt.txt sidecars and index.tsv.
// The index starts with a "filename\ttranscript" header line.
void export_dataset(const std::vector<Sample>& samples, const std::string& dir,
                    const std::string& format);

// Appends one sample; used by streaming generation.
class DatasetWriter {
 public:
  DatasetWriter(const std::string& dir, const std::string& format);
  ~DatasetWriter();
  void add(const Sample& s);
  void finish();
  int64_t count() const { return count_; }

 private:
  std::string dir_;
  std::string format_;
  std::string index_;
  int64_t count_ = 0;
  bool finished_ = false;
};

// Reads index.tsv; falls back to scanning *.png/*.pgm with .gt.txt sidecars
// when the index is missing. Items are ordered by filename in the fallback
// and by index order otherwise. Transcript is absent when the sidecar is
// missing in fallback mode; such items carry has_transcript = false.
struct DatasetEntry {
  std::string filename;
  std::string transcript;
  bool has_transcript = true;
};

std::vector<DatasetEntry> read_dataset_index(const std::string& dir);

}  // namespace pagetext
