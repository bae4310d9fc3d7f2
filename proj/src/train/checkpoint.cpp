#include "train/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.h"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace pagetext {

namespace {
constexpr const char* kMagic = "PAGETEXT-CKPT-1";
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ostringstream manifest;
  manifest << "step " << ckpt.step << "\n";
  manifest.precision(17);
  manifest << "val_cer " << ckpt.val_cer << "\n";
  int64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    manifest << name << " float32 ";
    const auto& shape = t.shape();
    for (size_t i = 0; i < shape.size(); ++i) manifest << (i ? "," : "") << shape[i];
    manifest << " " << offset << "\n";
    offset += t.size() * static_cast<int64_t>(sizeof(float));
  }
  std::string m = manifest.str();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write checkpoint: " + path);
  f << kMagic << "\n";
  f << "config_bytes " << ckpt.config_text.size() << "\n";
  f << "manifest_bytes " << m.size() << "\n";
  f << ckpt.config_text << m;
  for (const auto& [name, t] : ckpt.tensors) {
    f.write(reinterpret_cast<const char*>(t.data()),
            t.size() * static_cast<int64_t>(sizeof(float)));
  }
  if (!f) throw io_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot read checkpoint: " + path);
  std::string magic;
  std::getline(f, magic);
  if (magic != kMagic) throw format_error("not a checkpoint file: " + path);
  auto read_sized = [&](const char* key) -> size_t {
    std::string line;
    std::getline(f, line);
    std::istringstream is(line);
    std::string k;
    int64_t n = -1;
    is >> k >> n;
    if (k != key || n < 0) throw format_error("checkpoint header: expected " + std::string(key));
    return static_cast<size_t>(n);
  };
  size_t config_bytes = read_sized("config_bytes");
  size_t manifest_bytes = read_sized("manifest_bytes");

  Checkpoint ckpt;
  ckpt.config_text.resize(config_bytes);
  f.read(ckpt.config_text.data(), static_cast<std::streamsize>(config_bytes));
  std::string manifest(manifest_bytes, '\0');
  f.read(manifest.data(), static_cast<std::streamsize>(manifest_bytes));
  if (!f) throw format_error("truncated checkpoint header: " + path);

  struct Entry {
    std::string name;
    std::vector<int> shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  std::istringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    if (name == "step") {
      ls >> ckpt.step;
      continue;
    }
    if (name == "val_cer") {
      ls >> ckpt.val_cer;
      continue;
    }
    std::string dtype, shape_s;
    int64_t offset = -1;
    ls >> dtype >> shape_s >> offset;
    if (ls.fail() || dtype != "float32" || offset < 0) {
      throw format_error("checkpoint manifest: malformed line \"" + line + "\"");
    }
    Entry e;
    e.name = name;
    e.offset = offset;
    std::istringstream ss(shape_s);
    std::string dim;
    while (std::getline(ss, dim, ',')) e.shape.push_back(std::stoi(dim));
    entries.push_back(std::move(e));
  }

  std::streampos payload_start = f.tellg();
  for (const Entry& e : entries) {
    int64_t n = shape_numel(e.shape);
    std::vector<float> data(static_cast<size_t>(n));
    f.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    f.read(reinterpret_cast<char*>(data.data()), n * static_cast<int64_t>(sizeof(float)));
    if (!f) throw format_error("checkpoint payload truncated at tensor " + e.name);
    ckpt.tensors.emplace_back(e.name, Tensor<float>::from(e.shape, std::move(data)));
  }
  return ckpt;
}

void load_into_params(const Checkpoint& ckpt,
                      std::vector<std::pair<std::string, Tensor<float>>>& params) {
  std::string missing, mismatched, extra;
  size_t used = 0;
  for (auto& [name, param] : params) {
    const Tensor<float>* src = ckpt.find(name);
    if (!src) {
      missing += missing.empty() ? name : ", " + name;
      continue;
    }
    ++used;
    if (src->shape() != param.shape()) {
      mismatched += (mismatched.empty() ? "" : ", ") + name + " " + shape_str(src->shape()) +
                    " vs " + shape_str(param.shape());
      continue;
    }
    std::copy(src->data(), src->data() + src->size(), param.data());
  }
  size_t model_tensors = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    ++model_tensors;
    bool found = false;
    for (const auto& [pn, pt] : params) {
      if (pn == name) {
        found = true;
        break;
      }
    }
    if (!found) extra += extra.empty() ? name : ", " + name;
  }
  (void)used;
  (void)model_tensors;
  if (!missing.empty() || !mismatched.empty() || !extra.empty()) {
    std::string msg = "checkpoint incompatible with the running config:";
    if (!missing.empty()) msg += " missing tensors [" + missing + "]";
    if (!mismatched.empty()) msg += " shape mismatches [" + mismatched + "]";
    if (!extra.empty()) msg += " unknown tensors [" + extra + "]";
    throw format_error(msg);
  }
}

}  // namespace pagetext
