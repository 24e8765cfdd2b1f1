#include "cral/tagset.h"

#include <string>

#include "cral/error.h"

namespace cral {

std::string_view TagSet::symbol(TagId id) {
  if (id < 0 || id >= kSize) {
    throw InvalidArgument("tag index out of range: " + std::to_string(id));
  }
  return kSymbols[static_cast<std::size_t>(id)];
}

std::optional<TagId> TagSet::find(std::string_view symbol) {
  for (int i = 0; i < kSize; ++i) {
    if (kSymbols[static_cast<std::size_t>(i)] == symbol) return i;
  }
  return std::nullopt;
}

TagId TagSet::index(std::string_view symbol) {
  auto id = find(symbol);
  if (!id) throw InvalidArgument("unknown UPOS tag '" + std::string(symbol) + "'");
  return *id;
}

}  // namespace cral
