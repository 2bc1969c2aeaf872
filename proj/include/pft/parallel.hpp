#pragma once

namespace pft {

/// Worker count used by data-parallel kernels. Results never depend on it:
/// every output element is reduced by one worker in a fixed order.
void set_num_threads(int n);
int num_threads();

}  // namespace pft
