#include "labloop/agents/prompt_bank.hpp"

#include <cctype>

#include <fmt/format.h>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::agents {
namespace {

PromptTemplate template_from_json(const Json& j) {
  PromptTemplate t;
  t.system = j.value("system", "");
  t.user = j.value("user", "");
  t.json_mode = j.value("json_mode", false);
  t.max_tokens = j.value("max_tokens", 0);
  for (const auto& p : j.value("placeholders", Json::array())) t.placeholders.insert(p.get<std::string>());
  for (const auto& b : j.value("blocks", Json::array())) t.blocks.push_back(b.get<std::string>());
  return t;
}

Json template_to_json(const PromptTemplate& t) {
  return {{"system", t.system},     {"user", t.user},
          {"json_mode", t.json_mode}, {"max_tokens", t.max_tokens},
          {"placeholders", t.placeholders}, {"blocks", t.blocks}};
}

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string describe(const std::set<std::string>& s) { return "{" + text::join({s.begin(), s.end()}, ", ") + "}"; }

}  // namespace

PromptBank PromptBank::from_json(const Json& doc) {
  PromptBank bank;
  bank.domain = doc.at("domain").get<std::string>();
  for (const auto& [key, tpl] : doc.at("stages").items()) {
    int ord = std::stoi(key);
    StageId::of(ord);
    bank.stages[ord] = template_from_json(tpl);
  }
  const Json blocks_doc = doc.value("blocks", Json::object());
  for (const auto& [name, body] : blocks_doc.items()) {
    bank.blocks[name] = body.get<std::string>();
  }
  const Json subprompts_doc = doc.value("subprompts", Json::object());
  for (const auto& [name, tpl] : subprompts_doc.items()) {
    bank.subprompts[name] = template_from_json(tpl);
  }
  auto check_blocks = [&](const PromptTemplate& t, const std::string& where) {
    for (const auto& b : t.blocks) {
      if (!bank.blocks.count(b)) throw ConfigError(fmt::format("bank {}: {} uses unknown block '{}'", bank.domain, where, b));
    }
  };
  for (const auto& [ord, t] : bank.stages) check_blocks(t, fmt::format("stage {}", ord));
  for (const auto& [name, t] : bank.subprompts) check_blocks(t, "subprompt " + name);
  return bank;
}

PromptBank PromptBank::load(const fs::path& file) {
  try {
    return from_json(Json::parse(read_file(file)));
  } catch (const Json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

Json PromptBank::to_json() const {
  Json j{{"domain", domain}, {"stages", Json::object()}, {"blocks", blocks}, {"subprompts", Json::object()}};
  for (const auto& [ord, t] : stages) j["stages"][std::to_string(ord)] = template_to_json(t);
  for (const auto& [name, t] : subprompts) j["subprompts"][name] = template_to_json(t);
  return j;
}

std::string render_template_text(const std::string& text, const std::set<std::string>& declared, const Vars& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_name_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        std::string name = text.substr(i + 1, j - i - 1);
        if (declared.count(name)) {
          auto it = vars.find(name);
          if (it == vars.end()) throw RenderError("no value for placeholder {" + name + "}", name);
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

RenderedPrompt render(const PromptBank& bank, const PromptTemplate& tpl, const Vars& vars,
                      const std::vector<std::string>& overlays) {
  RenderedPrompt r;
  r.system = render_template_text(tpl.system, tpl.placeholders, vars);
  for (const auto& b : tpl.blocks) {
    r.system += "\n\n" + bank.blocks.at(b);
  }
  r.user = render_template_text(tpl.user, tpl.placeholders, vars);
  for (const auto& o : overlays) {
    if (o.empty()) continue;
    r.user += "\n\n" + o;
  }
  r.json_mode = tpl.json_mode;
  r.max_tokens = tpl.max_tokens;
  return r;
}

RenderedPrompt render_prompt(const PromptBank& bank, StageId stage, const Vars& vars,
                             const std::vector<std::string>& overlays) {
  auto it = bank.stages.find(stage.ordinal());
  if (it == bank.stages.end()) {
    throw ConfigError(fmt::format("bank {} has no template for stage {}", bank.domain, stage.ordinal()));
  }
  return render(bank, it->second, vars, overlays);
}

RenderedPrompt render_subprompt(const PromptBank& bank, const std::string& name, const Vars& vars,
                                const std::vector<std::string>& overlays) {
  auto it = bank.subprompts.find(name);
  if (it == bank.subprompts.end()) throw ConfigError(fmt::format("bank {} has no subprompt {}", bank.domain, name));
  return render(bank, it->second, vars, overlays);
}

ParityReport bank_parity_check(const std::vector<PromptBank>& banks) {
  ParityReport report;
  if (banks.empty()) return report;
  for (const auto& bank : banks) {
    for (int s = 1; s <= StageId::kCount; ++s) {
      if (!bank.stages.count(s)) report.issues.push_back({bank.domain, fmt::format("stage {}", s), "missing stage key"});
    }
  }
  const PromptBank& ref = banks.front();
  for (std::size_t b = 1; b < banks.size(); ++b) {
    const PromptBank& other = banks[b];
    for (const auto& [ord, tpl] : ref.stages) {
      auto it = other.stages.find(ord);
      if (it == other.stages.end()) continue;
      if (it->second.placeholders != tpl.placeholders) {
        report.issues.push_back({other.domain, fmt::format("stage {}", ord),
                                 fmt::format("placeholders {} differ from {} bank {}", describe(it->second.placeholders),
                                             ref.domain, describe(tpl.placeholders))});
      }
    }
    for (const auto& [name, tpl] : ref.subprompts) {
      auto it = other.subprompts.find(name);
      if (it == other.subprompts.end()) {
        report.issues.push_back({other.domain, "subprompt " + name, "missing subprompt"});
      } else if (it->second.placeholders != tpl.placeholders) {
        report.issues.push_back({other.domain, "subprompt " + name,
                                 fmt::format("placeholders {} differ from {} bank {}", describe(it->second.placeholders),
                                             ref.domain, describe(tpl.placeholders))});
      }
    }
  }
  return report;
}

BankSet BankSet::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("prompt bank directory not found: " + dir.string());
  BankSet set;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".bank") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) set.add(PromptBank::load(f));
  if (!set.banks_.count("ml")) throw ConfigError("the ml prompt bank is required");
  return set;
}

void BankSet::add(PromptBank bank) {
  std::string key = bank.domain;
  banks_[key] = std::move(bank);
}

const PromptBank& BankSet::for_domain(const std::string& domain) const {
  if (auto it = banks_.find(domain); it != banks_.end()) return it->second;
  auto ml = banks_.find("ml");
  if (ml == banks_.end()) throw ConfigError("no ml bank loaded");
  return ml->second;
}

std::vector<PromptBank> BankSet::all() const {
  std::vector<PromptBank> out;
  if (auto ml = banks_.find("ml"); ml != banks_.end()) out.push_back(ml->second);
  for (const auto& [k, v] : banks_) {
    if (k != "ml") out.push_back(v);
  }
  return out;
}

}  // namespace labloop::agents
