#include "partialseg/label_schema.hpp"

#include <json.hpp>

namespace partialseg {

using nlohmann::json;

MergePartition LabelSchema::partition_for(const std::string& dataset_id) const {
    for (const auto& [id, kept] : dataset_kept)
        if (id == dataset_id) return single_organ_partition(space, kept);
    throw ConfigError("unknown dataset id '" + dataset_id + "'");
}

std::string label_schema_to_json(const LabelSchema& schema) {
    json doc;
    doc["classes"] = schema.space.names();
    doc["datasets"] = json::array();
    for (const auto& [id, kept] : schema.dataset_kept)
        doc["datasets"].push_back({{"id", id}, {"kept", kept}});
    json excl = json::object();
    for (int n = 0; n < schema.exclusion.num_classes(); ++n)
        excl[std::to_string(n)] = schema.exclusion.excluded(n);
    doc["exclusion"] = excl;
    return doc.dump(2);
}

LabelSchema label_schema_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw CorruptFile(std::string("label schema is not valid JSON: ") + e.what());
    }

    try {
        LabelSpace space(doc.at("classes").get<std::vector<std::string>>());

        std::vector<std::pair<std::string, std::vector<int>>> datasets;
        for (const auto& entry : doc.at("datasets")) {
            datasets.emplace_back(entry.at("id").get<std::string>(),
                                  entry.at("kept").get<std::vector<int>>());
            for (int n : datasets.back().second)
                if (n < 0 || n >= space.num_classes())
                    throw VersionMismatch("dataset '" + datasets.back().first +
                                          "' references missing class " + std::to_string(n));
        }

        std::vector<std::vector<int>> excluded(space.num_classes());
        for (const auto& [key, value] : doc.at("exclusion").items()) {
            const int n = std::stoi(key);
            if (n < 0 || n >= space.num_classes())
                throw VersionMismatch("exclusion entry for missing class " + key);
            excluded[n] = value.get<std::vector<int>>();
            for (int k : excluded[n])
                if (k < 0 || k >= space.num_classes())
                    throw VersionMismatch("exclusion set of class " + key +
                                          " references missing class " + std::to_string(k));
        }

        ExclusionMap exclusion(space, std::move(excluded));
        return LabelSchema{std::move(space), std::move(datasets), std::move(exclusion)};
    } catch (const json::exception& e) {
        throw CorruptFile(std::string("label schema missing fields: ") + e.what());
    }
}

}  // namespace partialseg
