#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/agents/backend.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"

namespace labloop::agents {

inline const std::string kGenericDomain = "generic";

struct RoleDescriptor {
  std::string name;
  std::string stance;
};

struct DomainProfile {
  std::string id;
  std::string display_name;
  std::string paradigm;
  std::string condition_terminology;
  std::string baselines;
  std::string docker_image_tag;
  std::string metric_types;
  std::string statistical_tests;
  std::string preferred_template;
  std::vector<RoleDescriptor> debate_roles_hypothesis;
  std::vector<RoleDescriptor> debate_roles_analysis;

  static DomainProfile from_json(const Json& j);
  /// Text injected through the {domain_context} placeholder.
  std::string context_block() const;
};

class DomainRegistry {
 public:
  /// Loads `*.profile` files; a generic profile must be present.
  static DomainRegistry load_dir(const fs::path& dir);
  void add(DomainProfile profile);

  bool contains(const std::string& id) const { return profiles_.count(id) != 0; }
  /// Falls back to the generic profile for unknown ids.
  const DomainProfile& get(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, DomainProfile> profiles_;
};

struct KeywordRule {
  std::vector<std::string> phrase;  // lowercased tokens
  std::string domain;
  int specificity = 0;
  std::size_t file_order = 0;
};

/// Rules ordered most-specific-first; equal specificity keeps file order.
class KeywordRuleset {
 public:
  static KeywordRuleset from_json(const Json& doc);
  static KeywordRuleset load(const fs::path& file);

  /// Domain of the first rule whose phrase occurs in the topic as a contiguous
  /// token sequence (case-insensitive).
  std::optional<std::string> match(const std::string& topic) const;
  const std::vector<KeywordRule>& rules() const { return rules_; }

 private:
  std::vector<KeywordRule> rules_;
};

struct DomainDetection {
  std::string domain;
  int level = 3;  // 0 override, 1 keyword, 2 classifier, 3 generic fallback
  std::vector<std::string> warnings;
};

struct DetectionInputs {
  std::optional<std::string> forced_override;  // project.profile
  const KeywordRuleset* rules = nullptr;
  const DomainRegistry* registry = nullptr;
  AgentBackend* classifier = nullptr;
  const PromptBank* classifier_bank = nullptr;  // supplies the domain_classify subprompt
  TranscriptLog* transcript = nullptr;
};

/// Override, then keyword rules, then agent classification, then generic.
DomainDetection detect_domain(const std::string& topic, const DetectionInputs& in);

}  // namespace labloop::agents
