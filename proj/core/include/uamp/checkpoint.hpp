#pragma once

#include <string>

#include "uamp/ldnet.hpp"

namespace uamp {

/// JSON checkpoint: architecture, all parameters at full precision, the
/// recorded tau/mu paths, B when present, and the originating experiment
/// config (stored verbatim so a checkpoint is self-describing). A reloaded
/// net reproduces the forward pass bit for bit.
void save_checkpoint(const std::string& path, const LdNet& net,
                     const std::string& config_json);

struct Checkpoint {
  LdNet net;
  std::string config_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace uamp
