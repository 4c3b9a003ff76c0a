#include "cove/catalog.hpp"

#include <fstream>
#include <stdexcept>

#include "cove/errors.hpp"

#include <json.hpp>

namespace cove {

int32_t ItemCatalog::add(std::string external_id, std::string title) {
    const auto index = static_cast<int32_t>(items_.size());
    auto [it, inserted] = by_external_id_.emplace(external_id, index);
    if (!inserted) throw std::runtime_error("duplicate external_id in catalog: " + external_id);
    items_.push_back(Item{index, std::move(external_id), std::move(title)});
    return index;
}

int32_t ItemCatalog::add_or_get(const std::string& external_id, const std::string& title) {
    if (const auto it = by_external_id_.find(external_id); it != by_external_id_.end())
        return it->second;
    return add(external_id, title);
}

const Item& ItemCatalog::item(int32_t index) const {
    if (index < 0 || index >= count())
        throw std::out_of_range("item_index out of range: " + std::to_string(index));
    return items_[static_cast<std::size_t>(index)];
}

const int32_t* ItemCatalog::find(const std::string& external_id) const {
    const auto it = by_external_id_.find(external_id);
    return it == by_external_id_.end() ? nullptr : &it->second;
}

ItemCatalog ItemCatalog::load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open catalog: " + path.string());
    ItemCatalog catalog;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " +
                             e.what());
        }
        if (!rec.contains("external_id") || !rec.contains("title"))
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": missing external_id or title");
        catalog.add(rec.at("external_id").get<std::string>(), rec.at("title").get<std::string>());
    }
    return catalog;
}

void ItemCatalog::save_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    for (const auto& item : items_) {
        nlohmann::json rec;
        rec["external_id"] = item.external_id;
        rec["title"] = item.title;
        out << rec.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace cove
