#pragma once
// The item space: every recommendable item, in a fixed contiguous order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace cove {

struct Item {
    int32_t item_index = -1;   // ordinal in [0, count)
    std::string external_id;   // opaque, unique
    std::string title;
};

class ItemCatalog {
public:
    ItemCatalog() = default;

    // Appends an item; returns its index. Throws on duplicate external_id.
    int32_t add(std::string external_id, std::string title);
    // Returns the existing index for a known external_id, or adds the item.
    int32_t add_or_get(const std::string& external_id, const std::string& title);

    int32_t count() const { return static_cast<int32_t>(items_.size()); }
    const Item& item(int32_t index) const;
    const std::vector<Item>& items() const { return items_; }
    const int32_t* find(const std::string& external_id) const;

    // JSON-lines, one object per item {"external_id", "title"}; item_index
    // is the file order.
    static ItemCatalog load_jsonl(const std::filesystem::path& path);
    void save_jsonl(const std::filesystem::path& path) const;

private:
    std::vector<Item> items_;
    std::unordered_map<std::string, int32_t> by_external_id_;
};

}  // namespace cove
