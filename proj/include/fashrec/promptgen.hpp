#pragma once

// Three-segment recommendation prompts (instruction / input / response) and
// the strict single-line response grammar
//
//     ID: <item_id> | TITLE: <title>
//
// with a best-effort recovery path for generations that drift from it.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <functional>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fashrec/corpus.hpp"
#include "fashrec/embedcore.hpp"
#include "fashrec/io.hpp"
#include "fashrec/memory.hpp"

namespace fashrec {

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Whitespace-delimited token count.
inline std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

// Default wording paraphrases the usual structure of such prompts; it is not
// a verbatim copy of any published prompt.
struct PromptTemplate {
  std::string task_description =
      "You are a fashion recommendation assistant. Given a shopper's chronological "
      "search, click and purchase history, recommend the next product they will purchase.";
  std::vector<std::string> execution_requirements = {
      "Follow the sequential order of the interactions; recent events matter most.",
      "Pay attention to attributes that vary across the products the shopper interacted "
      "with, since they reveal fine-grained preferences.",
      "Weigh fashion-specific attributes such as category, brand, color and size.",
      "Prioritize products that appear among the top results of the shopper's searches."};
  std::string format_indicator =
      "Answer with exactly one line in the format: ID: <product id> | TITLE: <product title>";
  std::vector<std::string> attribute_keys = {"title", "category", "brand", "color", "size"};
  std::size_t max_tokens = 1024;

  void validate() const {
    require(!task_description.empty() && !execution_requirements.empty() &&
                !format_indicator.empty() && !attribute_keys.empty(),
            ErrorKind::Config, "prompt template: all segments must be non-empty");
    for (const auto& r : execution_requirements)
      require(!r.empty(), ErrorKind::Config, "prompt template: empty execution requirement");
    require(max_tokens > 0, ErrorKind::Config, "prompt template: max_tokens must be > 0");
  }
};

inline json to_json(const PromptTemplate& t) {
  return {{"task_description", t.task_description},
          {"execution_requirements", t.execution_requirements},
          {"format_indicator", t.format_indicator},
          {"attribute_keys", t.attribute_keys},
          {"max_tokens", t.max_tokens}};
}

inline PromptTemplate template_from_json(const json& j) {
  PromptTemplate t;
  t.task_description = j.value("task_description", t.task_description);
  t.execution_requirements = j.value("execution_requirements", t.execution_requirements);
  t.format_indicator = j.value("format_indicator", t.format_indicator);
  t.attribute_keys = j.value("attribute_keys", t.attribute_keys);
  t.max_tokens = j.value("max_tokens", t.max_tokens);
  t.validate();
  return t;
}

inline PromptTemplate load_template(const std::filesystem::path& path) {
  try {
    return template_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

struct Prompt {
  std::string id;  // caller-chosen, e.g. the user id of the test pair
  std::string instruction;
  std::string input;
  std::optional<std::string> response;  // training prompts only
  std::size_t token_count = 0;

  // The text sent to a generator: everything except the response.
  std::string text() const {
    return "### Instruction:\n" + instruction + "\n\n### Input:\n" + input + "\n\n### Response:\n";
  }
};

inline json to_json(const Prompt& p) {
  json j = {{"id", p.id}, {"instruction", p.instruction}, {"input", p.input}};
  j["response"] = p.response ? json(*p.response) : json(nullptr);
  return j;
}

inline void write_prompts(const std::filesystem::path& path, std::span<const Prompt> prompts) {
  auto out = open_output(path);
  for (const auto& p : prompts) out << to_json(p).dump() << '\n';
}

inline std::string render_response(const Item& item) {
  return "ID: " + item.item_id + " | TITLE: " + item.title();
}

inline std::string render_instruction(const PromptTemplate& t) {
  std::string s = t.task_description + "\nRequirements:\n";
  for (std::size_t i = 0; i < t.execution_requirements.size(); ++i)
    s += std::to_string(i + 1) + ". " + t.execution_requirements[i] + "\n";
  return s + t.format_indicator;
}

inline constexpr std::string_view kTopResultsPrefix = "  top results: ";

// Builds prompts against fixed catalog / memory / template. A null memory
// disables the "top results" lines.
class PromptBuilder {
 public:
  PromptBuilder(const Catalog& catalog, PromptTemplate tmpl,
                const QueryProductMemory* memory = nullptr,
                const TextEncoder* encoder = nullptr, MemoryLookupParams params = {},
                TokenCounter counter = count_tokens)
      : catalog_(catalog),
        template_(std::move(tmpl)),
        memory_(memory),
        encoder_(encoder),
        params_(params),
        counter_(std::move(counter)) {
    template_.validate();
    require(memory_ == nullptr || encoder_ != nullptr, ErrorKind::Config,
            "prompt builder: memory requires a query encoder");
    instruction_ = render_instruction(template_);
  }

  const PromptTemplate& prompt_template() const { return template_; }

  std::string render_item(const Item& item) const {
    std::string s = "id=" + item.item_id;
    for (const auto& key : template_.attribute_keys) {
      const auto value = item.attribute(key);
      if (!value.empty()) s += " | " + key + "=" + value;
    }
    return s;
  }

  std::string render_event(const InteractionEvent& e) const {
    if (!e.is_search()) return "[" + std::string(to_string(e.action)) + "] " +
                               render_item(catalog_.at(e.payload));
    std::string s = "[search] \"" + e.payload + "\"";
    if (memory_ != nullptr) {
      const auto hits = lookup(*memory_, e.payload, params_, *encoder_);
      if (!hits.empty()) {
        s += "\n";
        s += kTopResultsPrefix;
        for (std::size_t i = 0; i < hits.size(); ++i) {
          if (i) s += "; ";
          s += "[" + hits[i] + "] " + catalog_.at(hits[i]).title();
        }
      }
    }
    return s;
  }

  // Drops whole events oldest-first until the prompt fits max_tokens; the most
  // recent event is never dropped.
  Prompt build(const InteractionSequence& history, const Item* truth = nullptr) const {
    require(!history.events.empty(), ErrorKind::Validation,
            "build_prompt: empty history for user " + history.user_id);
    Prompt p;
    p.id = history.user_id;
    p.instruction = instruction_;
    if (truth != nullptr) p.response = render_response(*truth);

    std::vector<std::string> blocks;
    blocks.reserve(history.events.size());
    for (const auto& e : history.events) blocks.push_back(render_event(e));

    const std::size_t fixed = counter_(p.instruction) + (p.response ? counter_(*p.response) : 0);
    std::size_t first = 0;
    for (;;) {
      p.input.clear();
      for (std::size_t i = first; i < blocks.size(); ++i) {
        if (i > first) p.input += '\n';
        p.input += blocks[i];
      }
      p.token_count = fixed + counter_(p.input);
      if (p.token_count <= template_.max_tokens) break;
      require(first + 1 < blocks.size(), ErrorKind::Config,
              "build_prompt: most recent event alone exceeds the token budget of " +
                  std::to_string(template_.max_tokens));
      ++first;
    }
    return p;
  }

 private:
  const Catalog& catalog_;
  PromptTemplate template_;
  const QueryProductMemory* memory_;
  const TextEncoder* encoder_;
  MemoryLookupParams params_;
  TokenCounter counter_;
  std::string instruction_;
};

inline Prompt build_prompt(const InteractionSequence& history, const Catalog& catalog,
                           const QueryProductMemory* memory, const TextEncoder* encoder,
                           const PromptTemplate& tmpl, const MemoryLookupParams& params,
                           bool for_training, const Item* truth = nullptr) {
  require(!for_training || truth != nullptr, ErrorKind::Validation,
          "build_prompt: training prompt requires the truth item");
  return PromptBuilder(catalog, tmpl, memory, encoder, params)
      .build(history, for_training ? truth : nullptr);
}

// ---------------------------------------------------------------------------
// Response parsing

enum class ParseStatus { Strict, Recovered, Failed };

inline const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Strict: return "strict";
    case ParseStatus::Recovered: return "recovered";
    case ParseStatus::Failed: return "failed";
  }
  return "?";
}

struct GenerationOutput {
  std::string item_id;
  std::string title;
  ParseStatus parse_status = ParseStatus::Failed;

  bool operator==(const GenerationOutput&) const = default;
};

namespace parse_detail {

inline std::string trim(std::string_view s, std::string_view junk = " \t\r\n") {
  const auto b = s.find_first_not_of(junk);
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(junk) - b + 1));
}

inline std::string collapse_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (space) {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += c;
    }
  }
  return trim(out);
}

inline bool plausible_id(std::string_view tok) {
  if (tok.size() < 3) return false;
  bool digit = false;
  for (char c : tok) {
    if (std::isdigit(static_cast<unsigned char>(c))) digit = true;
    else if (!std::isalpha(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return digit;
}

inline constexpr std::string_view kTitleJunk = " \t\r\n\"',;.|";

}  // namespace parse_detail

inline GenerationOutput parse_generation(std::string_view text) {
  using namespace parse_detail;
  const std::string body = trim(text);
  const std::string first_line = trim(std::string_view(body).substr(0, body.find('\n')));

  static const std::regex strict(R"(^ID: ([^\s|]+) \| TITLE: (.*\S)$)");
  std::smatch m;
  if (std::regex_match(first_line, m, strict)) return {m[1], m[2], ParseStatus::Strict};

  // Labelled fields, any case, ':' or '=' separators.
  static const std::regex id_label(
      R"((?:^|[^a-z0-9])(?:product[ _-]?)?id\s*[:=]\s*["']?([a-z0-9][a-z0-9_\-]*))",
      std::regex::icase);
  static const std::regex title_label(R"(title\s*[:=]\s*([^\n|]*))", std::regex::icase);

  std::string id, title;
  std::string rest = body;
  if (std::regex_search(body, m, id_label)) {
    id = m[1];
    rest = m.prefix().str() + " " + m.suffix().str();
  }
  if (std::regex_search(body, m, title_label)) title = trim(m[1].str(), kTitleJunk);

  if (id.empty()) {
    // First plausible id-looking token anywhere in the text.
    std::string tok;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
      const char c = i < body.size() ? body[i] : ' ';
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        if (tok.empty()) start = i;
        tok += c;
        continue;
      }
      if (plausible_id(tok)) {
        id = tok;
        rest = body.substr(0, start) + " " + body.substr(start + tok.size());
        break;
      }
      tok.clear();
    }
  }
  if (id.empty()) return {};
  if (title.empty()) {
    static const std::regex label_words(R"(\b(product|id|title)\b\s*[:=]?)", std::regex::icase);
    title = trim(collapse_spaces(std::regex_replace(rest, label_words, " ")), kTitleJunk);
  }
  if (title.empty()) return {};
  return {id, title, ParseStatus::Recovered};
}

}  // namespace fashrec
