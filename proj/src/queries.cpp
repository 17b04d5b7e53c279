#include "bseg/queries.hpp"

#include <algorithm>

namespace bseg {

std::size_t QuerySet::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

std::vector<std::size_t> QuerySet::active_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i]) idx.push_back(i);
  }
  return idx;
}

}  // namespace bseg
