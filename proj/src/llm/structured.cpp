#include "mtsim/llm/structured.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <vector>

namespace mtsim::llm {

using nlohmann::json;

std::string_view to_string(Schema s) noexcept {
  switch (s) {
    case Schema::Assessment: return "assessment";
    case Schema::Strategy: return "strategy";
    case Schema::DirectOrder: return "direct_order";
    case Schema::WithdrawList: return "withdraw_list";
    case Schema::Reflection: return "reflection";
  }
  return "assessment";
}

std::optional<Schema> schema_from_string(std::string_view s) noexcept {
  for (Schema v : {Schema::Assessment, Schema::Strategy, Schema::DirectOrder, Schema::WithdrawList,
                   Schema::Reflection})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<std::string> first_fenced_block(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body_start = text.find('\n', open + 3);
  if (body_start == std::string_view::npos) return std::nullopt;
  // the info string after the fence must be empty or "json"
  std::string info(text.substr(open + 3, body_start - open - 3));
  info.erase(std::remove_if(info.begin(), info.end(), [](unsigned char c) { return std::isspace(c); }),
             info.end());
  std::transform(info.begin(), info.end(), info.begin(), [](unsigned char c) { return std::tolower(c); });
  if (!info.empty() && info != "json") return std::nullopt;
  ++body_start;
  const auto close = text.find("```", body_start);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(body_start, close - body_start));
}

namespace {

enum class Kind { String, Number, Integer, Enum, ObjectArray, IntegerArray };

struct Field {
  std::string_view name;
  Kind kind;
  bool required{true};
  double lo{-std::numeric_limits<double>::infinity()};
  double hi{std::numeric_limits<double>::infinity()};
  bool lo_open{false};
  std::vector<std::string_view> values{};
  const std::vector<Field>* items{nullptr};
};

const std::vector<Field> kAssessment{
    {"trend", Kind::Enum, true, 0, 0, false, {"strong_down", "down", "flat", "up", "strong_up"}},
    {"confidence", Kind::Number, true, 0.0, 1.0},
    {"analysis", Kind::String, false},
};

const std::vector<Field> kStrategy{
    {"direction", Kind::Enum, true, 0, 0, false, {"strong_sell", "sell", "hold", "buy", "strong_buy"}},
    {"urgency", Kind::Enum, true, 0, 0, false, {"low", "mid", "high"}},
    {"exposure", Kind::Number, true, 0.0, 1.0},
    {"rationale", Kind::String, false},
};

const std::vector<Field> kDirectOrderItem{
    {"side", Kind::Enum, true, 0, 0, false, {"buy", "sell"}},
    {"price", Kind::Number, false, 0.0, std::numeric_limits<double>::infinity(), true},
    {"price_offset", Kind::Number, false, -1.0, 10.0, true},
    {"volume", Kind::Integer, true, 1.0},
};

const std::vector<Field> kDirectOrder{
    {"orders", Kind::ObjectArray, true, 0, 0, false, {}, &kDirectOrderItem},
    {"rationale", Kind::String, false},
};

const std::vector<Field> kWithdraw{
    {"withdraw", Kind::IntegerArray, true, 1.0},
    {"rationale", Kind::String, false},
};

const std::vector<Field> kLesson{
    {"tag", Kind::String, true},
    {"note", Kind::String, true},
};

const std::vector<Field> kReflection{
    {"summary", Kind::String, true},
    {"lessons", Kind::ObjectArray, false, 0, 0, false, {}, &kLesson},
};

const std::vector<Field>& fields_for(Schema s) {
  switch (s) {
    case Schema::Assessment: return kAssessment;
    case Schema::Strategy: return kStrategy;
    case Schema::DirectOrder: return kDirectOrder;
    case Schema::WithdrawList: return kWithdraw;
    case Schema::Reflection: return kReflection;
  }
  return kAssessment;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::optional<std::string> check_number(const Field& f, const json& v, const std::string& path) {
  if (!v.is_number()) return path + ": expected a number";
  const double x = v.get<double>();
  if (!std::isfinite(x)) return path + ": not finite";
  if (f.lo_open ? !(x > f.lo) : !(x >= f.lo)) return path + ": value " + v.dump() + " below allowed range";
  if (!(x <= f.hi)) return path + ": value " + v.dump() + " above allowed range";
  return std::nullopt;
}

std::optional<std::string> validate_object(json& obj, const std::vector<Field>& fields, const std::string& path);

std::optional<std::string> validate_field(const Field& f, json& v, const std::string& path) {
  switch (f.kind) {
    case Kind::String:
      if (!v.is_string()) return path + ": expected a string";
      return std::nullopt;
    case Kind::Number:
      return check_number(f, v, path);
    case Kind::Integer:
      if (!v.is_number_integer()) return path + ": expected an integer";
      return check_number(f, v, path);
    case Kind::Enum: {
      if (!v.is_string()) return path + ": expected a string";
      const std::string s = lower(v.get<std::string>());
      if (std::find(f.values.begin(), f.values.end(), s) == f.values.end()) {
        std::string allowed;
        for (auto a : f.values) allowed += (allowed.empty() ? "" : "|") + std::string(a);
        return path + ": '" + v.get<std::string>() + "' is not one of " + allowed;
      }
      v = s;
      return std::nullopt;
    }
    case Kind::ObjectArray:
      if (!v.is_array()) return path + ": expected an array";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_object()) return path + "[" + std::to_string(i) + "]: expected an object";
        if (auto e = validate_object(v[i], *f.items, path + "[" + std::to_string(i) + "]")) return e;
      }
      return std::nullopt;
    case Kind::IntegerArray:
      if (!v.is_array()) return path + ": expected an array";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer()) return path + "[" + std::to_string(i) + "]: expected an integer";
        if (auto e = check_number(f, v[i], path + "[" + std::to_string(i) + "]")) return e;
      }
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<std::string> validate_object(json& obj, const std::vector<Field>& fields, const std::string& path) {
  for (const auto& [key, val] : obj.items()) {
    if (std::none_of(fields.begin(), fields.end(), [&](const Field& f) { return f.name == key; }))
      return path + ": unknown field '" + key + "'";
  }
  for (const auto& f : fields) {
    const std::string name(f.name);
    auto it = obj.find(name);
    if (it == obj.end()) {
      if (f.required) return path + ": missing required field '" + name + "'";
      continue;
    }
    if (auto e = validate_field(f, *it, path + "." + name)) return e;
  }
  return std::nullopt;
}

} // namespace

ParseResult parse_structured(std::string_view response, Schema schema) {
  auto block = first_fenced_block(response);
  if (!block) return ParseError{"no fenced JSON block found; answer with one ```json block"};
  json doc;
  try {
    doc = json::parse(*block);
  } catch (const json::parse_error& e) {
    return ParseError{std::string("invalid JSON in first block: ") + e.what()};
  }
  if (!doc.is_object()) return ParseError{"first block must be a JSON object"};
  if (auto err = validate_object(doc, fields_for(schema), std::string(to_string(schema))))
    return ParseError{*err};
  if (schema == Schema::DirectOrder) {
    for (std::size_t i = 0; i < doc["orders"].size(); ++i) {
      const auto& o = doc["orders"][i];
      if (o.contains("price") == o.contains("price_offset"))
        return ParseError{"direct_order.orders[" + std::to_string(i) +
                          "]: give exactly one of 'price' or 'price_offset'"};
    }
  }
  if (schema == Schema::Reflection && !doc.contains("lessons")) doc["lessons"] = json::array();
  return doc;
}

} // namespace mtsim::llm
