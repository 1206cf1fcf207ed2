#include "refinery/prompts.hpp"

#include "refinery/errors.hpp"

#include <sstream>

namespace refinery::prompts {

namespace {

void append_numbered(std::ostringstream& out, const std::vector<std::string>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
        out << (i + 1) << ". " << items[i] << "\n";
    }
}

} // namespace

Rendered summarize(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ArgumentError("summarize: no texts");
    std::ostringstream user;
    user << "Summarize the shared theme of the following posts in one concise paragraph.\n\n"
            "Posts:\n";
    append_numbered(user, texts);
    user << "\nReply with the summary only.";
    return {"You condense sets of social media posts into a single faithful summary.",
            user.str()};
}

Rendered coherence(const std::string& summary, const std::vector<std::string>& texts) {
    if (texts.empty()) throw ArgumentError("coherence: no texts");
    std::ostringstream user;
    user << "Summary:\n" << summary << "\n\nPosts:\n";
    append_numbered(user, texts);
    user << "\nDoes the summary describe one coherent theme genuinely shared by these posts?\n"
            "Reply on the first line with COHERENT or INCOHERENT, followed by a brief rationale.";
    return {"You audit whether a summary is semantically aligned with the posts it claims to cover.",
            user.str()};
}

Rendered label(const std::string& summary) {
    std::ostringstream user;
    user << "Summary:\n" << summary
         << "\n\nPropose a label of at most 8 words naming the theme this summary describes.\n"
            "Reply with the label only.";
    return {"You name discussion themes with short, specific labels.", user.str()};
}

Rendered consolidate(const std::vector<std::string>& labels) {
    if (labels.size() < 2) throw ArgumentError("consolidate: need at least 2 labels");
    std::ostringstream user;
    user << "The following labels name the same semantic category:\n";
    for (const auto& l : labels) user << "- " << l << "\n";
    user << "\nReply with one label of at most 8 words that best represents the whole group.\n"
            "Reply with the label only.";
    return {"You merge near-duplicate theme labels into one representative label.", user.str()};
}

Rendered assign(const std::string& text, const std::vector<std::string>& choices) {
    if (choices.empty()) throw ArgumentError("assign: no choices");
    std::ostringstream user;
    user << "Post:\n" << text << "\n\nLabels:\n";
    append_numbered(user, choices);
    user << "\nChoose the label that best fits the post. Reply with exactly one label from the "
            "list, verbatim.";
    return {"You classify posts against a fixed list of theme labels.", user.str()};
}

std::string reprompt_suffix(const std::string& template_id) {
    if (template_id == "coherence") {
        return "\n\nYour previous reply did not follow the required format. The first line must "
               "begin with COHERENT or INCOHERENT.";
    }
    if (template_id == "assign") {
        return "\n\nYour previous reply was not one of the listed labels. Reply with exactly one "
               "label from the list, verbatim.";
    }
    return "\n\nYour previous reply was empty or malformed. Follow the reply instructions exactly.";
}

} // namespace refinery::prompts
