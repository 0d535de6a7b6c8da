#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "labloop/agents/backend.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/stage.hpp"

namespace labloop::agents {

struct PromptTemplate {
  std::string system;
  std::string user;
  bool json_mode = false;
  int max_tokens = 0;
  /// Declared placeholder names. Only these `{name}` spans are substituted;
  /// every other brace pair is literal text.
  std::set<std::string> placeholders;
  /// Reusable blocks appended to the system message, in order.
  std::vector<std::string> blocks;
};

struct PromptBank {
  std::string domain;
  std::map<int, PromptTemplate> stages;
  std::map<std::string, std::string> blocks;
  std::map<std::string, PromptTemplate> subprompts;

  static PromptBank from_json(const Json& doc);
  static PromptBank load(const fs::path& file);
  Json to_json() const;
};

using Vars = std::map<std::string, std::string>;

/// Substitutes declared placeholders; undeclared `{...}` spans pass through
/// verbatim. Throws RenderError naming the first declared placeholder with no value.
std::string render_template_text(const std::string& text, const std::set<std::string>& declared, const Vars& vars);

RenderedPrompt render(const PromptBank& bank, const PromptTemplate& tpl, const Vars& vars,
                      const std::vector<std::string>& overlays);

/// Renders the stage template; overlays are appended to the user message in order.
RenderedPrompt render_prompt(const PromptBank& bank, StageId stage, const Vars& vars,
                             const std::vector<std::string>& overlays = {});
RenderedPrompt render_subprompt(const PromptBank& bank, const std::string& name, const Vars& vars,
                                const std::vector<std::string>& overlays = {});

struct ParityIssue {
  std::string bank;
  std::string key;  // "stage 8" or "subprompt code_repair"
  std::string detail;
};

struct ParityReport {
  std::vector<ParityIssue> issues;
  bool ok() const { return issues.empty(); }
};

/// Every bank must expose all 23 stages, and corresponding templates across
/// banks must declare identical placeholder sets. The first bank is the reference.
ParityReport bank_parity_check(const std::vector<PromptBank>& banks);

/// Banks keyed by domain id, loaded from `config/prompts/*.bank`.
class BankSet {
 public:
  static BankSet load_dir(const fs::path& dir);
  void add(PromptBank bank);
  /// The domain's native bank, or the ML bank for domains served by adapters.
  const PromptBank& for_domain(const std::string& domain) const;
  std::vector<PromptBank> all() const;

 private:
  std::map<std::string, PromptBank> banks_;
};

}  // namespace labloop::agents
