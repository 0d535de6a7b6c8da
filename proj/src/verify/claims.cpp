#include "labloop/verify/claims.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "labloop/common/text.hpp"
#include "labloop/verify/tables.hpp"

namespace labloop::verify {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return is_alnum(c) || c == '_'; }
// Characters that glue a digit into a larger identifier such as "resnet-50" or "v1.2".
bool is_glue(char c) { return is_word(c) || c == '.'; }

std::vector<std::pair<std::size_t, std::size_t>> exempt_spans(const std::string& t) {
  static const std::regex patterns[] = {
      std::regex(R"(\\(?:cite[a-z]*|ref|eqref|autoref|cref|label|url|href)\{[^}]*\})"),
      std::regex(R"(\[\[[^\]]*\]\])"),
      std::regex(R"(\[[0-9,;\s\-]+\])"),
  };
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& re : patterns) {
    for (auto it = std::sregex_iterator(t.begin(), t.end(), re); it != std::sregex_iterator(); ++it) {
      spans.emplace_back(static_cast<std::size_t>(it->position()),
                         static_cast<std::size_t>(it->position() + it->length()));
    }
  }
  return spans;
}

std::string previous_word(const std::string& t, std::size_t pos) {
  std::size_t i = pos;
  while (i > 0 && (t[i - 1] == ' ' || t[i - 1] == '~' || t[i - 1] == '(' || t[i - 1] == '.' || t[i - 1] == '\t')) --i;
  std::size_t end = i;
  while (i > 0 && is_alpha(t[i - 1])) --i;
  return text::to_lower(t.substr(i, end - i));
}

std::string next_word(const std::string& t, std::size_t pos) {
  std::size_t i = pos;
  while (i < t.size() && (t[i] == ' ' || t[i] == '~' || t[i] == '\t')) ++i;
  std::size_t start = i;
  while (i < t.size() && is_alpha(t[i])) ++i;
  return text::to_lower(t.substr(start, i - start));
}

std::size_t line_start(const std::string& t, std::size_t pos) {
  std::size_t nl = pos == 0 ? std::string::npos : t.rfind('\n', pos - 1);
  return nl == std::string::npos ? 0 : nl + 1;
}

std::size_t paragraph_start(const std::string& t, std::size_t pos) {
  std::size_t p = pos == 0 ? std::string::npos : t.rfind("\n\n", pos - 1);
  return p == std::string::npos ? 0 : p + 2;
}

bool is_table_row(const std::string& t, std::size_t ls) {
  std::size_t i = ls;
  while (i < t.size() && (t[i] == ' ' || t[i] == '\t')) ++i;
  return i < t.size() && t[i] == '|';
}

bool word_at(const std::string& t, std::size_t pos, const std::string& needle_lower) {
  if (pos + needle_lower.size() > t.size()) return false;
  for (std::size_t k = 0; k < needle_lower.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(t[pos + k])) != needle_lower[k]) return false;
  }
  auto boundary = [](char c) { return !(is_word(c) || c == '-'); };
  if (pos > 0 && !boundary(t[pos - 1])) return false;
  std::size_t end = pos + needle_lower.size();
  return end >= t.size() || boundary(t[end]);
}

std::optional<std::string> nearest_condition(const std::string& t, std::size_t from, std::size_t to,
                                             const std::vector<std::string>& conditions) {
  std::optional<std::string> best;
  std::size_t best_end = 0;
  for (const auto& c : conditions) {
    if (c.empty()) continue;
    const std::string lc = text::to_lower(c);
    for (std::size_t p = from; p + lc.size() <= to; ++p) {
      if (word_at(t, p, lc)) {
        std::size_t end = p + lc.size();
        // Latest end wins; on equal ends the longer (earlier starting) name wins.
        if (!best || end > best_end || (end == best_end && c.size() > best->size())) {
          best = c;
          best_end = end;
        }
      }
    }
  }
  return best;
}

std::string sentence_context(const std::string& t, std::size_t pos) {
  std::vector<std::size_t> starts{0};
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i] == '\n' || ((t[i] == '.' || t[i] == '!' || t[i] == '?') && t[i + 1] == ' ')) starts.push_back(i + 1);
  }
  std::size_t k = 0;
  while (k + 1 < starts.size() && starts[k + 1] <= pos) ++k;
  std::size_t b = starts[k == 0 ? 0 : k - 1];
  std::size_t e = k + 2 < starts.size() ? starts[k + 2] : t.size();
  std::string ctx = text::trim(t.substr(b, e - b));
  if (ctx.size() > 400) ctx = ctx.substr(0, 400);
  return ctx;
}

}  // namespace

ClaimConfig ClaimConfig::defaults() {
  ClaimConfig c;
  c.reference_words = {"section", "sections", "sec",      "table",   "tables",   "tab",      "figure",
                       "figures", "fig",      "eq",       "eqs",     "equation", "equations", "appendix",
                       "app",     "algorithm", "alg",     "step",    "steps",    "stage",    "stages",
                       "phase",   "chapter",  "line",     "lines",   "listing",  "theorem",  "lemma",
                       "footnote", "hypothesis", "ref"};
  c.count_nouns = {"seed",  "seeds",  "run",   "runs",  "condition", "conditions", "epoch",  "epochs",
                   "repetition", "repetitions", "trial", "trials", "hypotheses", "files", "layers", "gpu",
                   "gpus", "agents", "roles", "rounds", "days", "hours", "minutes"};
  return c;
}

ClaimConfig ClaimConfig::load(const fs::path& file) {
  const Json j = Json::parse(read_file(file));
  ClaimConfig c;
  c.strict_sections.clear();
  for (const auto& s : j.at("strict_sections")) c.strict_sections.insert(text::to_lower(s.get<std::string>()));
  c.year_min = j.at("year_range").at(0).get<int>();
  c.year_max = j.at("year_range").at(1).get<int>();
  for (const auto& s : j.value("reference_words", Json::array())) c.reference_words.insert(s.get<std::string>());
  for (const auto& s : j.value("count_nouns", Json::array())) c.count_nouns.insert(s.get<std::string>());
  c.placeholder = j.value("placeholder", c.placeholder);
  return c;
}

bool ClaimConfig::is_strict(const std::string& section_name) const {
  for (const auto& tok : text::word_tokens(section_name)) {
    if (strict_sections.count(tok)) return true;
  }
  return false;
}

Json NumericClaim::to_json() const {
  Json j{{"printed", (negative ? "-" : "") + printed + (percent ? "%" : "")},
         {"value", value},
         {"decimals", decimals},
         {"section", section},
         {"strict", strict},
         {"context", context},
         {"offset", offset}};
  if (condition_scope) j["condition_scope"] = *condition_scope;
  return j;
}

std::string to_string(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::Matched: return "matched";
    case ClaimStatus::PlaceholderSubstituted: return "placeholder_substituted";
    case ClaimStatus::Reject: return "reject";
  }
  return "reject";
}

Json ClaimVerdict::to_json() const {
  Json j{{"claim", claim.to_json()}, {"status", to_string(status)}};
  if (matched_entry) j["matched_entry"] = *matched_entry;
  return j;
}

Json DocumentVerification::to_json() const {
  Json v = Json::array();
  for (const auto& x : verdicts) v.push_back(x.to_json());
  return {{"accepted", accepted}, {"rejected_values", rejected_values}, {"verdicts", v}};
}

std::vector<NumericClaim> extract_claims(const std::string& section, const std::string& t,
                                         const std::vector<std::string>& conditions, const ClaimConfig& cfg) {
  const auto spans = exempt_spans(t);
  auto exempt_at = [&](std::size_t pos) {
    return std::any_of(spans.begin(), spans.end(), [&](const auto& s) { return pos >= s.first && pos < s.second; });
  };
  const bool strict = cfg.is_strict(section);

  std::vector<NumericClaim> out;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!is_digit(t[i])) {
      ++i;
      continue;
    }
    std::size_t tok = i;
    bool negative = false;
    bool glued = false;
    if (i > 0) {
      const char p = t[i - 1];
      if (p == '-') {
        if (i >= 2 && is_alnum(t[i - 2])) {
          glued = true;
        } else {
          negative = true;
          tok = i - 1;
        }
      } else if (is_glue(p)) {
        glued = true;
      }
    }
    std::size_t j = i;
    while (j < t.size() && is_digit(t[j])) ++j;
    std::size_t int_end = j;
    if (j + 1 < t.size() && t[j] == '.' && is_digit(t[j + 1])) {
      ++j;
      while (j < t.size() && is_digit(t[j])) ++j;
    }
    // "1.2.3", "3D", "2nd", "1e-3" are identifiers, not measurements.
    if (j < t.size() && (is_word(t[j]) || (t[j] == '.' && j + 1 < t.size() && is_digit(t[j + 1])))) glued = true;
    if (glued) {
      while (j < t.size() && (is_glue(t[j]) || t[j] == '-')) ++j;
      i = j;
      continue;
    }
    NumericClaim c;
    c.printed = t.substr(i, j - i);
    c.decimals = j > int_end ? static_cast<int>(j - int_end - 1) : 0;
    c.negative = negative;
    c.value = std::stod(c.printed) * (negative ? -1.0 : 1.0);
    std::size_t end = j;
    if (end < t.size() && t[end] == '%') {
      c.percent = true;
      ++end;
    }
    i = end;

    if (exempt_at(tok)) continue;
    const bool integer = c.decimals == 0;
    if (integer && !c.percent && !negative) {
      const long n = std::stol(c.printed);
      if (n >= cfg.year_min && n <= cfg.year_max && c.printed.size() == 4) continue;
      if (cfg.count_nouns.count(next_word(t, end))) continue;
      const std::size_t ls = line_start(t, tok);
      if (text::trim(t.substr(ls, tok - ls)).empty() && end < t.size() && (t[end] == '.' || t[end] == ')')) continue;
      if (tok > 0 && t[tok - 1] == '(' && end < t.size() && t[end] == ')' && c.printed.size() <= 2) continue;
    }
    if (cfg.reference_words.count(previous_word(t, tok))) continue;

    c.section = section;
    c.strict = strict;
    c.offset = tok;
    c.length = end - tok;
    c.context = sentence_context(t, tok);
    const std::size_t ls = line_start(t, tok);
    const std::size_t scope_from = is_table_row(t, ls) ? ls : paragraph_start(t, tok);
    c.condition_scope = nearest_condition(t, scope_from, tok, conditions);
    out.push_back(std::move(c));
  }
  return out;
}

bool printed_matches(const NumericClaim& claim, double value) {
  const std::string want = (claim.negative ? "-" : "") + claim.printed;
  if (format_fixed(value, claim.decimals) == want) return true;
  return claim.percent && format_fixed(value * 100.0, claim.decimals) == want;
}

std::vector<std::string> matching_entries(const NumericClaim& claim, const VerifiedRegistry& reg) {
  std::vector<std::string> keys;
  for (const auto& [key, e] : reg.entries()) {
    if (claim.condition_scope && e.condition != *claim.condition_scope) continue;
    bool hit = printed_matches(claim, e.mean) || printed_matches(claim, e.stddev);
    for (std::size_t k = 0; !hit && k < e.seed_values.size(); ++k) hit = printed_matches(claim, e.seed_values[k]);
    if (hit) keys.push_back(key);
  }
  return keys;
}

DocumentVerification verify_document(const Json& manuscript, const VerifiedRegistry& reg, const ClaimConfig& cfg) {
  DocumentVerification out;
  out.manuscript = manuscript;
  const auto conditions = reg.conditions();
  Json& sections = out.manuscript["sections"];
  if (!sections.is_array()) sections = Json::array();

  for (auto& sec : sections) {
    const std::string name = sec.value("name", "");
    std::string body = sec.value("text", "");
    auto claims = extract_claims(name, body, conditions, cfg);
    const std::size_t first = out.verdicts.size();
    for (auto& c : claims) {
      ClaimVerdict v;
      v.claim = c;
      const auto keys = matching_entries(c, reg);
      if (c.condition_scope ? !keys.empty() : keys.size() == 1) {
        v.status = ClaimStatus::Matched;
        v.matched_entry = keys.front();
      } else if (c.strict) {
        v.status = ClaimStatus::Reject;
        out.accepted = false;
        out.rejected_values.push_back((c.negative ? "-" : "") + c.printed + (c.percent ? "%" : ""));
      } else {
        v.status = ClaimStatus::PlaceholderSubstituted;
      }
      out.verdicts.push_back(std::move(v));
    }
    for (std::size_t k = out.verdicts.size(); k > first; --k) {
      const auto& v = out.verdicts[k - 1];
      if (v.status == ClaimStatus::PlaceholderSubstituted) body.replace(v.claim.offset, v.claim.length, cfg.placeholder);
    }
    sec["text"] = body;
  }
  return out;
}

}  // namespace labloop::verify
