#pragma once
#include <filesystem>
#include <map>
#include <string>

namespace mtsim::llm {

using PromptVars = std::map<std::string, std::string>;

// A versioned set of prompt templates. Placeholders are `{name}` where name is
// lower-case letters and underscores; anything else in braces is literal.
class PromptSet {
public:
  PromptSet() = default;
  PromptSet(std::string version, std::map<std::string, std::string> templates);

  // The set compiled into the binary from prompts/v1.
  static PromptSet builtin();
  // Loads every *.txt in `dir`; the version is read from a VERSION file.
  static PromptSet load(const std::filesystem::path& dir);

  const std::string& version() const noexcept { return version_; }
  bool has(const std::string& name) const { return templates_.contains(name); }
  const std::string& raw(const std::string& name) const;

  // Throws std::invalid_argument naming any placeholder without a value.
  std::string render(const std::string& name, const PromptVars& vars) const;

private:
  std::string version_;
  std::map<std::string, std::string> templates_;
};

std::string render_template(const std::string& tmpl, const PromptVars& vars);

} // namespace mtsim::llm
