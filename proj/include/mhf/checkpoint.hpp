#pragma once

#include <iosfwd>
#include <string>

#include "mhf/model.hpp"

namespace mhf {

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

/// Text format: a `mhf-checkpoint 1` magic line, `key value` header lines
/// recording the model configuration, then one `tensor <name> <rows> <cols>`
/// block per parameter with values as C99 hex floats, closed by `end`.
/// Hex floats make save -> load reproduce every double bit for bit.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Hex-float text for a double, and its inverse. Shared with other codecs.
std::string hex_double(double v);
double parse_double(const std::string& text);

}  // namespace mhf
