#include "cmpc/quadrature.hpp"

namespace cmpc {
namespace detail {

// Generating vector of a base-2 extensible rank-1 lattice, usable for
// N = 2^0 .. 2^20 points in up to 64 dimensions. Constructed greedily,
// component by component, minimising the embedded order-2 Korobov-space
// worst-case error (product weights 1/j^2) jointly over N = 2^10 .. 2^20.
extern const std::uint32_t kLatticeGeneratingVector[kMaxLatticeDim];
const std::uint32_t kLatticeGeneratingVector[kMaxLatticeDim] = {
    1,      29413,  717403,  484575, 223561, 664499, 899937, 634065,
    625195, 423223, 885739,  162245, 408089, 639313, 782503, 991423,
    226933, 454887, 358303,  342145, 703275, 978977, 906119, 534007,
    996289, 284757, 386803,  406827, 863029, 635375, 136065, 936703,
    824171, 129275, 1040059, 837057, 150045, 182079, 288121, 559739,
    986139, 632303, 163313,  525671, 779085, 158585, 758209, 946489,
    224353, 634753, 546699,  13647,  738989, 918777, 383189, 346167,
    24397,  538931, 623467,  66079,  944611, 418829, 497017, 619935,
};

}  // namespace detail
}  // namespace cmpc
