#include "refinery/embedding.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <unordered_map>

namespace refinery {

ReducedEmbedding load_external_reduction(const std::filesystem::path& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open reduction file: " + path.string());
    }

    std::unordered_map<std::string, std::vector<double>> rows;
    Eigen::Index dim = -1;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("reduction line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("vector") || !j["vector"].is_array()) {
            throw ParseError("reduction line " + std::to_string(line_no) +
                             ": expected {id, vector}");
        }
        const std::string id = j["id"].get<std::string>();
        std::vector<double> v = j["vector"].get<std::vector<double>>();
        if (dim < 0) dim = Eigen::Index(v.size());
        if (Eigen::Index(v.size()) != dim) {
            throw ValidationError("reduction line " + std::to_string(line_no) +
                                  ": inconsistent vector width");
        }
        if (!rows.emplace(id, std::move(v)).second) {
            throw ValidationError("reduction file repeats id \"" + id + "\"");
        }
    }

    if (rows.size() != corpus.size()) {
        throw ValidationError("reduction row count " + std::to_string(rows.size()) +
                              " does not match corpus size " + std::to_string(corpus.size()));
    }

    ReducedEmbedding e;
    e.reducer_tag = "external";
    e.matrix.resize(Eigen::Index(corpus.size()), dim);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto it = rows.find(corpus.documents[i].id);
        if (it == rows.end()) {
            throw ValidationError("reduction file lacks document \"" + corpus.documents[i].id + "\"");
        }
        for (Eigen::Index j = 0; j < dim; ++j) {
            e.matrix(Eigen::Index(i), j) = it->second[std::size_t(j)];
        }
    }
    validate_embedding(e);
    return e;
}

} // namespace refinery
