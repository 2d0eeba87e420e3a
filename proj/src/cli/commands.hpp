#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "art2music/cli.hpp"
#include "art2music/error.hpp"

namespace art2music::cli {

// Bad invocation (missing flag, contradictory options). Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  PipelineConfig config;
  std::optional<std::filesystem::path> out_path;
  std::ostream& out;
  std::ostream& err;
};

int cmd_melspec(const Context& ctx, const std::vector<std::filesystem::path>& inputs);
int cmd_align(const Context& ctx);
int cmd_stats(const Context& ctx);
int cmd_train(const Context& ctx);

struct GenerateArgs {
  std::string image_id;
  std::string text_id;
};
int cmd_generate(const Context& ctx, const GenerateArgs& args);

struct EvalArgs {
  std::string metric = "all";
  std::filesystem::path generated;
  std::filesystem::path reference;
  std::filesystem::path generated_emb;
  std::filesystem::path reference_emb;
};
int cmd_eval(const Context& ctx, const EvalArgs& args);

int cmd_rate_validate(const Context& ctx, const std::vector<std::filesystem::path>& inputs);

}  // namespace art2music::cli
