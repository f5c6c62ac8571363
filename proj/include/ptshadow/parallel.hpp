#pragma once

#include <cmath>
#include <functional>

namespace ptshadow {

// Neumaier-compensated sum. Every statistic in this library is reduced
// through one of these in a fixed traversal order, which is what makes the
// outputs bit-identical regardless of thread count (see for_each_block).
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x)
    {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }

    // Folding another partial sum in is itself a fixed-order operation, so
    // block results can be merged sequentially after a parallel phase.
    void merge(const CompensatedSum& o)
    {
        add(o.sum);
        comp += o.comp;
    }

    double value() const { return sum + comp; }
};

int hardware_threads();

// Global default worker count: PTSHADOW_THREADS env var if set, else the
// hardware count. Thread count never influences numerical results; it only
// sets how many blocks run concurrently.
int default_threads();
void set_default_threads(int n);

// Runs fn(block) for block = 0..n_blocks-1 using up to `threads` workers
// (0 = default_threads()). Blocks are claimed from a shared atomic counter;
// each block must write only to its own output slot. Callers then merge the
// slots in block order, giving results independent of scheduling.
void for_each_block(int n_blocks, int threads, const std::function<void(int)>& fn);

} // namespace ptshadow
