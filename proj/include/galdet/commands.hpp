#pragma once

#include "galdet/config.hpp"

namespace galdet {

// One function per CLI subcommand. Each validates what it needs up
// front (ConfigError before any output is written), then runs and
// returns 0. Runtime failures raise Error.

int cmd_parse_dataset(const RunConfig& config);
int cmd_build_gallery(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_eval_classifier(const RunConfig& config);
int cmd_detect(const RunConfig& config);
int cmd_eval_detector(const RunConfig& config);

}  // namespace galdet
