// Server-side metadata: which clients annotate which classes.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fedmlp/errors.hpp"

namespace fedmlp {

/// For every class i, the ascending list of client ids that label it.
/// Every list must be non-empty.
struct AnnotationDistribution {
    std::vector<std::vector<int>> clients_by_class;

    int class_count() const { return static_cast<int>(clients_by_class.size()); }

    const std::vector<int>& clients_of(int cls) const {
        return clients_by_class.at(static_cast<std::size_t>(cls));
    }

    bool labels(int client, int cls) const {
        const auto& v = clients_of(cls);
        return std::binary_search(v.begin(), v.end(), client);
    }

    /// Builds the distribution from each client's active-class list.
    static AnnotationDistribution from_active_sets(const std::vector<std::vector<int>>& active,
                                                   int classes) {
        AnnotationDistribution s;
        s.clients_by_class.assign(static_cast<std::size_t>(classes), {});
        for (std::size_t k = 0; k < active.size(); ++k)
            for (int c : active[k]) {
                if (c < 0 || c >= classes)
                    throw ConfigError("annotation: class index " + std::to_string(c) +
                                      " out of range");
                s.clients_by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(k));
            }
        for (auto& v : s.clients_by_class) std::sort(v.begin(), v.end());
        return s;
    }

    void validate() const {
        for (std::size_t c = 0; c < clients_by_class.size(); ++c)
            if (clients_by_class[c].empty())
                throw ProtocolError("annotation: class " + std::to_string(c) +
                                    " is labeled by no client");
    }
};

}  // namespace fedmlp
