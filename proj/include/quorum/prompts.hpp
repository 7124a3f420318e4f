#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "quorum/llm_gateway.hpp"

namespace quorum {

/// A prompt template asset. Ids carry the version (`news_signal.v1`) so a
/// changed template never silently reuses cassette entries of the old one.
struct PromptTemplate {
    std::string id;
    std::string system;
    std::string user;
};

using PromptVars = std::map<std::string, std::string>;

const PromptTemplate& prompt_template(std::string_view id);
std::vector<std::string> prompt_template_ids();

/// Substitutes `{{name}}` placeholders. Throws InvalidArgument on a
/// placeholder without a value.
std::string render_template(std::string_view text, const PromptVars& vars);

Prompt build_prompt(std::string_view id, const PromptVars& vars, PromptParams params = {});

}  // namespace quorum
