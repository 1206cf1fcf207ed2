// Writes the bundled synthetic corpus: four disjoint-vocabulary topics plus a
// mixed-topic block, two exact duplicate texts, a heavy author, and platform
// timestamps with one clearly densest 28-day stretch. Fully deterministic so
// the committed fixture can be regenerated byte-for-byte.
//
// Sentence skeletons use only stopword connectives, so after vectorization a
// document is exactly its sliding 10-word window over the topic vocabulary.
// Adjacent windows overlap in 9 of 10 words, which keeps each topic one dense
// chain instead of fragmenting into per-skeleton islands.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = unsigned(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + std::int64_t(doe) - 719468;
}

std::string stamp(std::int64_t epoch_day, unsigned hour, unsigned minute) {
    // round-trip through civil date for the RFC 3339 text
    std::int64_t z = epoch_day + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = unsigned(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = std::int64_t(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02u:%02u:00Z",
                  static_cast<long long>(y + (m <= 2)), m, d, hour, minute);
    return buf;
}

struct Topic {
    const char* tag;
    std::vector<const char*> vocab;
};

const std::vector<Topic> kTopics{
    {"solar",
     {"solar", "panel", "inverter", "rooftop", "kilowatt", "battery", "sunlight", "feedin",
      "watt", "array", "offgrid", "charger"}},
    {"pasta",
     {"pasta", "basil", "garlic", "semolina", "sauce", "dough", "parmesan", "linguine",
      "ragu", "gnocchi", "pecorino", "marinara"}},
    {"trail",
     {"trail", "ridge", "sneakers", "marathon", "summit", "pace", "elevation", "scramble",
      "switchback", "cairn", "ultra", "descent"}},
    {"plants",
     {"monstera", "cutting", "repot", "fertilizer", "humidity", "aphids", "propagation",
      "perlite", "rootbound", "variegated", "trellis", "photos"}},
};

// ten slots each; every connective is on the vectorizer's stopword list
const std::vector<const char*> kSkeletons{
    "the %s and the %s are up on our %s now, and the %s with the %s can do more for the %s, "
    "not just for the %s, so the %s and the %s are out and the %s is in",
    "if the %s or the %s can get the %s up to a %s, then the %s and the %s will do it, "
    "and we can get the %s and the %s out of the %s and the %s",
    "we had the %s and the %s in by %s, and now the %s and the %s are all that the %s "
    "can get from the %s, so no more %s for the %s or the %s",
    "was out by the %s when the %s and the %s had the %s at a %s, and some %s from the %s "
    "can now get into the %s and the %s, not the %s",
    "they have been on about the %s and the %s, but the %s and the %s are what we will get, "
    "and any %s or %s with a %s can be more than some %s, so the %s and the %s are it",
};

const std::vector<const char*> kMixerVocab{
    "crossposting", "threads", "multitasking", "chaos", "randomness",
    "scrolling",    "doom",    "takes",        "churn", "drama"};

std::string topic_text(const Topic& topic, int i) {
    const char* tpl = kSkeletons[std::size_t(i % 5)];
    const auto& v = topic.vocab;
    char buf[512];
    std::snprintf(buf, sizeof(buf), tpl, v[(i + 0) % 12], v[(i + 1) % 12], v[(i + 2) % 12],
                  v[(i + 3) % 12], v[(i + 4) % 12], v[(i + 5) % 12], v[(i + 6) % 12],
                  v[(i + 7) % 12], v[(i + 8) % 12], v[(i + 9) % 12]);
    return buf;
}

std::string mixed_text(int i) {
    // two words each from three topics plus six mixer terms
    std::string out = "grab bag of";
    for (int t = 0; t < 3; ++t) {
        const Topic& topic = kTopics[std::size_t((i + t) % 4)];
        out += std::string(" ") + topic.vocab[std::size_t((i + t) % 12)];
        out += std::string(" ") + topic.vocab[std::size_t((i + t + 5) % 12)];
    }
    for (int k = 0; k < 6; ++k) {
        out += std::string(" ") + kMixerVocab[std::size_t((i * 3 + k) % 10)];
    }
    out += " today";
    return out;
}

} // namespace

int main(int argc, char** argv) {
    const std::string path = argc > 1 ? argv[1] : "tests/fixtures/demo_corpus.ndjson";
    std::ofstream out(path);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }

    const std::int64_t x_sparse_base = days_from_civil(2019, 10, 1);
    const std::int64_t x_dense_base = days_from_civil(2020, 1, 14);  // 28-day dense stretch
    const std::int64_t bsky_base = days_from_civil(2025, 6, 1);

    int x_seq = 0;
    int bsky_seq = 0;
    int global = 0;
    auto emit = [&](const std::string& id, std::string text, int topic_index) {
        // topics 0-1 live on one platform, 2-3 on the other; mixed posts split
        const bool on_x = topic_index <= 1 || (topic_index == 4 && global % 2 == 0);
        std::string platform;
        std::int64_t day;
        unsigned hour;
        if (on_x) {
            const int j = x_seq++;
            day = (j % 5 < 3) ? x_dense_base + j % 28 : x_sparse_base + (j * 2) % 100;
            hour = unsigned(j % 24);
            platform = "x";
        } else {
            const int j = bsky_seq++;
            day = bsky_base + j % 30;
            hour = unsigned(j % 24);
            platform = "bluesky";
        }
        const std::string author =
            global % 9 == 0 ? "user-0" : "user-" + std::to_string(1 + global % 29);
        nlohmann::json j{{"id", id},
                         {"text", std::move(text)},
                         {"author", author},
                         {"timestamp", stamp(day, hour, unsigned(global % 60))},
                         {"platform", platform}};
        out << j.dump() << "\n";
        ++global;
    };

    for (std::size_t t = 0; t < kTopics.size(); ++t) {
        const Topic& topic = kTopics[t];
        for (int i = 0; i < 45; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "%s-%03d", topic.tag, i);
            // one exact duplicate pair in each of the first two topics
            const int source = (i == 44 && t < 2) ? 0 : i;
            std::string text = topic_text(topic, source);
            if (source == i) {
                text += " zq" + std::string(topic.tag) + std::to_string(i);  // df-1 tail token
            } else {
                text += " zq" + std::string(topic.tag) + "0";
            }
            emit(id, std::move(text), int(t));
        }
    }
    for (int i = 0; i < 20; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "mix-%03d", i);
        emit(id, mixed_text(i), 4);
    }

    std::cout << "wrote " << global << " documents to " << path << "\n";
    return global == 200 ? 0 : 1;
}
