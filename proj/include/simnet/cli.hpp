#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace simnet {

/// Bad flags, missing or malformed inputs: exit code 2.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry point of the `simnet` tool. Returns 0 on success, 1 on internal
/// errors, 2 on user or configuration errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Hypothesis file: image id TAB space-joined tokens per line.
struct Hypothesis {
  std::string image_id;
  std::vector<std::string> tokens;
};
std::vector<Hypothesis> read_hypotheses(const std::string& path);

}  // namespace simnet
