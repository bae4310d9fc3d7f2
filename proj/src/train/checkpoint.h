#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.h"

namespace pagetext {

// Checkpoint container: magic line, byte counts, the config snapshot
// (verbatim ini text), a manifest of tensor name/dtype/shape/offset lines,
// then a raw little-endian float32 payload. Adam state rides along under
// "adam.m." / "adam.v." names.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  int64_t step = 0;
  double val_cer = -1.0;  // negative = never evaluated
  std::string config_text;

  const Tensor<float>* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into same-named model parameters. Every model
// parameter must be present with a matching shape and every non-"adam."
// checkpoint tensor must be consumed; otherwise throws format_error listing
// the offending names.
void load_into_params(const Checkpoint& ckpt,
                      std::vector<std::pair<std::string, Tensor<float>>>& params);

}  // namespace pagetext
