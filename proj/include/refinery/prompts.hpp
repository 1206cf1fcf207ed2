#pragma once

#include <string>
#include <vector>

namespace refinery::prompts {

// Each renderer fixes the system text, the user text, and the reply contract
// for one judge operation. Stage code never assembles prompt strings itself,
// so a template change cannot silently diverge between call sites.

struct Rendered {
    std::string system;
    std::string user;
};

Rendered summarize(const std::vector<std::string>& texts);
Rendered coherence(const std::string& summary, const std::vector<std::string>& texts);
Rendered label(const std::string& summary);
Rendered consolidate(const std::vector<std::string>& labels);
Rendered assign(const std::string& text, const std::vector<std::string>& choices);

// Appended to the user prompt on the single allowed reprompt after a
// malformed reply.
std::string reprompt_suffix(const std::string& template_id);

} // namespace refinery::prompts
