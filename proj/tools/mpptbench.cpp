#include <cstdio>

#include "mpptbench/pv_device.hpp"

int main() {
  const auto& cell = mpptbench::reference_cell();
  const auto mpp = mpptbench::mpp_oracle(cell, mpptbench::Environment{});
  std::printf("reference cell: alpha=%.4f r_s=%.4f r_sh=%.1f i_s=%.4e\n",
              cell.alpha_ideality, cell.r_s, cell.r_sh, cell.i_s);
  std::printf("mpp: v=%.5f i=%.5f p=%.5f\n", mpp.voltage, mpp.current, mpp.power);
  return 0;
}
