#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "focuspar/error.hpp"

namespace focuspar {

enum class AttributeKind { value, accessory };

struct AttributeDef {
    int id = 0;
    std::string region;
    std::string category;
    std::string value;
    AttributeKind kind = AttributeKind::value;

    std::string name() const { return region + "-" + category + "-" + value; }
    friend bool operator==(const AttributeDef&, const AttributeDef&) = default;
};

/// One horizontal body band. Value words are mutually exclusive within the
/// band; accessory words are independent booleans rendered as glyphs.
struct RegionSpec {
    std::string name;
    std::string category;
    std::vector<std::string> values;
    std::vector<std::string> accessories;
};

struct SchemaConfig {
    std::vector<RegionSpec> regions;
};

class AttributeSchema {
public:
    AttributeSchema() = default;
    AttributeSchema(std::vector<std::string> regions, std::vector<AttributeDef> attrs)
        : regions_(std::move(regions)), attrs_(std::move(attrs)) {}

    std::size_t size() const noexcept { return attrs_.size(); }
    const std::vector<AttributeDef>& attributes() const noexcept { return attrs_; }
    const AttributeDef& at(int id) const {
        require(id >= 0 && static_cast<std::size_t>(id) < attrs_.size(), "attribute id out of range");
        return attrs_[static_cast<std::size_t>(id)];
    }
    const std::vector<std::string>& regions() const noexcept { return regions_; }

    int region_index(int id) const {
        const auto& r = at(id).region;
        return static_cast<int>(std::find(regions_.begin(), regions_.end(), r) - regions_.begin());
    }

    /// Attribute ids of `region`, filtered by kind.
    std::vector<int> ids_in_region(const std::string& region, AttributeKind kind) const {
        std::vector<int> out;
        for (const auto& a : attrs_)
            if (a.region == region && a.kind == kind) out.push_back(a.id);
        return out;
    }

    std::vector<int> all_ids() const {
        std::vector<int> ids(attrs_.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
        return ids;
    }

    friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;

private:
    std::vector<std::string> regions_;
    std::vector<AttributeDef> attrs_;
};

/// Default desk-scale universe: 4 bands × 4 colour values + 2 accessories (Z = 18).
/// Colour lists are rotated per band so that holding out the last value of
/// each band still leaves every colour word seen in some other band.
inline SchemaConfig default_schema_config() {
    return SchemaConfig{{
        {"head", "hair", {"red", "green", "blue", "yellow"}, {"glasses"}},
        {"upper", "clothes", {"green", "blue", "yellow", "white"}, {"bag"}},
        {"lower", "pants", {"blue", "yellow", "white", "red"}, {}},
        {"feet", "shoes", {"yellow", "white", "red", "green"}, {}},
    }};
}

/// Ids are assigned region by region (values first, then accessories), so
/// the id order is already region-sorted.
inline AttributeSchema build_schema(const SchemaConfig& cfg) {
    require(cfg.regions.size() >= 2, "schema: need at least 2 regions");
    std::vector<std::string> regions;
    std::vector<AttributeDef> attrs;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::set<std::string> region_names;
    auto push = [&](const RegionSpec& r, const std::string& category, const std::string& word, AttributeKind kind) {
        require(!word.empty(), "schema: empty attribute word in region " + r.name);
        require(word.find_first_of(" \t\n") == std::string::npos, "schema: word contains whitespace: " + word);
        require(seen.emplace(r.name, category, word).second,
                "schema: duplicate (region, category, value): (" + r.name + ", " + category + ", " + word + ")");
        attrs.push_back(AttributeDef{static_cast<int>(attrs.size()), r.name, category, word, kind});
    };
    for (const auto& r : cfg.regions) {
        require(!r.name.empty() && !r.category.empty(), "schema: region needs a name and category");
        require(region_names.insert(r.name).second, "schema: duplicate region " + r.name);
        require(r.values.size() >= 2, "schema: region " + r.name + " needs at least 2 value words");
        regions.push_back(r.name);
        for (const auto& v : r.values) push(r, r.category, v, AttributeKind::value);
        for (const auto& acc : r.accessories) push(r, "accessory", acc, AttributeKind::accessory);
    }
    return AttributeSchema(std::move(regions), std::move(attrs));
}

struct OpenDomainSplit {
    std::vector<int> seen;
    std::vector<int> unseen;
};

/// Marks the last `holdout` value attributes (by id) of every region as unseen.
inline OpenDomainSplit split_open_domain(const AttributeSchema& schema, int holdout) {
    require(holdout >= 0, "split_open_domain: negative holdout");
    std::vector<bool> unseen(schema.size(), false);
    for (const auto& region : schema.regions()) {
        auto ids = schema.ids_in_region(region, AttributeKind::value);
        require(static_cast<std::size_t>(holdout) < ids.size(),
                "split_open_domain: holdout " + std::to_string(holdout) + " exhausts region " + region);
        for (std::size_t k = ids.size() - static_cast<std::size_t>(holdout); k < ids.size(); ++k)
            unseen[static_cast<std::size_t>(ids[k])] = true;
    }
    OpenDomainSplit out;
    for (std::size_t i = 0; i < unseen.size(); ++i) (unseen[i] ? out.unseen : out.seen).push_back(static_cast<int>(i));
    return out;
}

// JSON plumbing ------------------------------------------------------------

inline void to_json(nlohmann::json& j, const RegionSpec& r) {
    j = {{"name", r.name}, {"category", r.category}, {"values", r.values}, {"accessories", r.accessories}};
}
inline void from_json(const nlohmann::json& j, RegionSpec& r) {
    j.at("name").get_to(r.name);
    j.at("category").get_to(r.category);
    j.at("values").get_to(r.values);
    r.accessories = j.value("accessories", std::vector<std::string>{});
}
inline void to_json(nlohmann::json& j, const SchemaConfig& c) { j = c.regions; }
inline void from_json(const nlohmann::json& j, SchemaConfig& c) { j.get_to(c.regions); }

}  // namespace focuspar
