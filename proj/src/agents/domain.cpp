#include "labloop/agents/domain.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::agents {
namespace {

std::vector<RoleDescriptor> roles_from_json(const Json& arr) {
  std::vector<RoleDescriptor> out;
  for (const auto& r : arr) out.push_back({r.at("name").get<std::string>(), r.value("stance", "")});
  return out;
}

}  // namespace

DomainProfile DomainProfile::from_json(const Json& j) {
  DomainProfile p;
  p.id = j.at("id").get<std::string>();
  p.display_name = j.value("display_name", p.id);
  p.paradigm = j.value("paradigm", "");
  p.condition_terminology = j.value("condition_terminology", "");
  p.baselines = j.value("baselines", "");
  p.docker_image_tag = j.value("docker_image_tag", "");
  p.metric_types = j.value("metric_types", "");
  p.statistical_tests = j.value("statistical_tests", "");
  p.preferred_template = j.value("preferred_template", "article");
  p.debate_roles_hypothesis = roles_from_json(j.value("debate_roles_hypothesis", Json::array()));
  p.debate_roles_analysis = roles_from_json(j.value("debate_roles_analysis", Json::array()));
  if (p.debate_roles_hypothesis.size() != 3 || p.debate_roles_analysis.size() != 3) {
    throw ConfigError("domain profile " + p.id + " needs 3 hypothesis roles and 3 analysis roles");
  }
  return p;
}

std::string DomainProfile::context_block() const {
  return fmt::format(
      "Domain: {}\nParadigm: {}\nConditions are called: {}\nStandard baselines: {}\nMetric types: {}\n"
      "Statistical tests: {}",
      display_name, paradigm, condition_terminology, baselines, metric_types, statistical_tests);
}

DomainRegistry DomainRegistry::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("domain directory not found: " + dir.string());
  DomainRegistry reg;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".profile") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      reg.add(DomainProfile::from_json(Json::parse(read_file(f))));
    } catch (const Json::exception& e) {
      throw ConfigError(f.string() + ": " + e.what());
    }
  }
  if (!reg.contains(kGenericDomain)) throw ConfigError("the generic domain profile is required");
  return reg;
}

void DomainRegistry::add(DomainProfile profile) {
  std::string id = profile.id;
  if (!profiles_.emplace(id, std::move(profile)).second) throw ConfigError("duplicate domain profile " + id);
}

const DomainProfile& DomainRegistry::get(const std::string& id) const {
  if (auto it = profiles_.find(id); it != profiles_.end()) return it->second;
  return profiles_.at(kGenericDomain);
}

std::vector<std::string> DomainRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : profiles_) out.push_back(k);
  return out;
}

KeywordRuleset KeywordRuleset::from_json(const Json& doc) {
  KeywordRuleset set;
  std::size_t order = 0;
  for (const auto& r : doc.at("rules")) {
    KeywordRule rule;
    rule.phrase = text::word_tokens(r.at("pattern").get<std::string>());
    if (rule.phrase.empty()) throw ConfigError("keyword rule with empty pattern");
    rule.domain = r.at("domain").get<std::string>();
    rule.specificity = r.value("specificity", 0);
    rule.file_order = order++;
    set.rules_.push_back(std::move(rule));
  }
  std::stable_sort(set.rules_.begin(), set.rules_.end(),
                   [](const KeywordRule& a, const KeywordRule& b) { return a.specificity > b.specificity; });
  return set;
}

KeywordRuleset KeywordRuleset::load(const fs::path& file) { return from_json(Json::parse(read_file(file))); }

std::optional<std::string> KeywordRuleset::match(const std::string& topic) const {
  const auto tokens = text::word_tokens(topic);
  for (const auto& rule : rules_) {
    if (rule.phrase.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + rule.phrase.size() <= tokens.size(); ++i) {
      if (std::equal(rule.phrase.begin(), rule.phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        return rule.domain;
      }
    }
  }
  return std::nullopt;
}

DomainDetection detect_domain(const std::string& topic, const DetectionInputs& in) {
  DomainDetection out;
  if (in.forced_override && !in.forced_override->empty()) {
    out.domain = *in.forced_override;
    out.level = 0;
    if (in.registry && !in.registry->contains(out.domain)) {
      out.warnings.push_back("forced domain '" + out.domain + "' has no profile; generic profile used");
    }
    return out;
  }
  if (in.rules) {
    if (auto hit = in.rules->match(topic)) {
      out.domain = *hit;
      out.level = 1;
      return out;
    }
  }
  if (in.classifier && in.classifier_bank) {
    try {
      AgentRequest req{"classify", render_subprompt(*in.classifier_bank, "domain_classify", {{"topic", topic}})};
      req.prompt.json_mode = true;
      auto resp = call_agent(*in.classifier, req, in.transcript);
      std::string id = resp.structured.value("domain", "");
      if (!id.empty() && id != kGenericDomain && (!in.registry || in.registry->contains(id))) {
        out.domain = id;
        out.level = 2;
        return out;
      }
      if (!id.empty() && id != kGenericDomain) {
        out.warnings.push_back("classifier answered unknown domain '" + id + "'");
      }
    } catch (const Error& e) {
      out.warnings.push_back(std::string("domain classification unavailable: ") + e.what());
    }
  }
  out.domain = kGenericDomain;
  out.level = 3;
  return out;
}

}  // namespace labloop::agents
