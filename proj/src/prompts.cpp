#include "quorum/prompts.hpp"

#include <algorithm>

namespace quorum {

namespace {

struct RawAsset {
    const char* name;
    const char* body;
};

constexpr RawAsset kAssets[] = {
#include "prompt_assets.inc"
};

std::string_view trim_newlines(std::string_view s) {
    while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

PromptTemplate parse_asset(const RawAsset& raw) {
    std::string_view body = raw.body;
    constexpr std::string_view sys_tag = "[system]";
    constexpr std::string_view user_tag = "[user]";
    auto sys = body.find(sys_tag);
    auto user = body.find(user_tag);
    if (sys == std::string_view::npos || user == std::string_view::npos || user < sys) {
        throw Error(Errc::InvalidArgument, std::string("prompt asset ") + raw.name + " lacks [system]/[user]");
    }
    PromptTemplate t;
    t.id = raw.name;
    t.system = std::string(trim_newlines(body.substr(sys + sys_tag.size(), user - sys - sys_tag.size())));
    t.user = std::string(trim_newlines(body.substr(user + user_tag.size())));
    return t;
}

const std::vector<PromptTemplate>& registry() {
    static const std::vector<PromptTemplate> all = [] {
        std::vector<PromptTemplate> out;
        for (const auto& raw : kAssets) out.push_back(parse_asset(raw));
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        return out;
    }();
    return all;
}

}  // namespace

const PromptTemplate& prompt_template(std::string_view id) {
    const auto& all = registry();
    auto it = std::lower_bound(all.begin(), all.end(), id,
                               [](const PromptTemplate& t, std::string_view x) { return t.id < x; });
    if (it == all.end() || it->id != id) {
        throw Error(Errc::InvalidArgument, "unknown prompt template '" + std::string(id) + "'");
    }
    return *it;
}

std::vector<std::string> prompt_template_ids() {
    std::vector<std::string> ids;
    for (const auto& t : registry()) ids.push_back(t.id);
    return ids;
}

std::string render_template(std::string_view text, const PromptVars& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        std::string name{text.substr(open + 2, close - open - 2)};
        auto it = vars.find(name);
        if (it == vars.end()) throw Error(Errc::InvalidArgument, "no value for placeholder '" + name + "'");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

Prompt build_prompt(std::string_view id, const PromptVars& vars, PromptParams params) {
    const auto& t = prompt_template(id);
    return Prompt{render_template(t.system, vars), render_template(t.user, vars), std::move(params), t.id};
}

}  // namespace quorum
