#pragma once

#include <cstddef>
#include <functional>

namespace tpf {

// Worker pool shared by the whole process. Every parallel loop in the
// library writes to disjoint slots and all reductions run as fixed-order
// serial passes afterwards, so results are bit-identical for any pool size.

void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). The chunking may depend on the pool size but
// the set of indices each fn(i) sees does not.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tpf
