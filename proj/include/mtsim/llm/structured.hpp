#pragma once
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace mtsim::llm {

// Registered output schemas. The published JSON shapes are in docs/prompts.md
// and in the v1 prompt templates.
enum class Schema { Assessment, Strategy, DirectOrder, WithdrawList, Reflection };

std::string_view to_string(Schema s) noexcept;
std::optional<Schema> schema_from_string(std::string_view s) noexcept;

struct ParseError {
  std::string message;
};

using ParseResult = std::variant<nlohmann::json, ParseError>;

// Extracts the first fenced block (```json ... ``` or ``` ... ```) and
// validates it. Unknown fields are rejected, enum values are matched
// case-insensitively and normalized to lower case. Pure.
ParseResult parse_structured(std::string_view response, Schema schema);

// The first fenced block's body, or nullopt if there is none.
std::optional<std::string> first_fenced_block(std::string_view text);

} // namespace mtsim::llm
