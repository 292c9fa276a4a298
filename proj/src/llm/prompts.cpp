#include "mtsim/llm/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mtsim::llm {

// generated from prompts/v1 at configure time
extern const char* const kBuiltinPromptVersion;
extern const std::map<std::string, std::string>& builtin_prompt_templates();

PromptSet::PromptSet(std::string version, std::map<std::string, std::string> templates)
    : version_(std::move(version)), templates_(std::move(templates)) {}

PromptSet PromptSet::builtin() { return {kBuiltinPromptVersion, builtin_prompt_templates()}; }

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  std::map<std::string, std::string> templates;
  std::string version = dir.filename().string();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    if (entry.path().filename() == "VERSION") {
      version = ss.str();
      while (!version.empty() && std::isspace(static_cast<unsigned char>(version.back()))) version.pop_back();
    } else if (entry.path().extension() == ".txt") {
      templates[entry.path().stem().string()] = ss.str();
    }
  }
  if (templates.empty()) throw std::invalid_argument("no prompt templates in " + dir.string());
  return {version, std::move(templates)};
}

const std::string& PromptSet::raw(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw std::invalid_argument("unknown prompt template '" + name + "'");
  return it->second;
}

std::string PromptSet::render(const std::string& name, const PromptVars& vars) const {
  return render_template(raw(name), vars);
}

std::string render_template(const std::string& tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        const std::string key = tmpl.substr(i + 1, j - i - 1);
        auto it = vars.find(key);
        if (it == vars.end()) throw std::invalid_argument("prompt placeholder {" + key + "} has no value");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out += tmpl[i++];
  }
  return out;
}

} // namespace mtsim::llm
