#pragma once

namespace dg
{

// Instrumentation for the tensor product kernels. kernel_invocations counts
// one-dimensional matrix passes over a full tensor (the unit of the kernel
// call counts per operator and loop type); adds/mults/fmas follow the
// operation model of the 1D stripe kernels. Counts are per lane batch, i.e.
// independent of the SIMD width.
struct KernelCounters
{
  long long adds = 0;
  long long mults = 0;
  long long fmas = 0;
  long long kernel_invocations = 0;

  void reset() { *this = KernelCounters(); }

  long long flops() const { return adds + mults + 2 * fmas; }

  KernelCounters operator-(const KernelCounters &o) const
  {
    KernelCounters r;
    r.adds = adds - o.adds;
    r.mults = mults - o.mults;
    r.fmas = fmas - o.fmas;
    r.kernel_invocations = kernel_invocations - o.kernel_invocations;
    return r;
  }
};

// Per-stripe cost of a plain rows x cols matrix-vector product: one multiply
// and cols-1 FMAs per output row.
inline void charge_plain(KernelCounters *c, int rows, int cols,
                         long long n_stripes)
{
  if (!c)
    return;
  c->mults += n_stripes * rows;
  c->fmas += n_stripes * static_cast<long long>(rows) * (cols - 1);
}

// Per-stripe cost of the even-odd decomposed product. For square value
// matrices this is the closed form 2k additions/subtractions, k
// multiplications and floor(k(k-2)/2) FMAs; note that for odd k the literal
// schedule spends one FMA more and two additions fewer (the same flop
// total), since the k dot products cannot be covered by k multiplications
// and floor(k(k-2)/2) FMAs alone. The counters report the closed-form model.
inline void charge_even_odd(KernelCounters *c, int rows, int cols,
                            long long n_stripes)
{
  if (!c)
    return;
  if (rows == cols)
    {
      const long long k = rows;
      c->adds += n_stripes * 2 * k;
      c->mults += n_stripes * k;
      c->fmas += n_stripes * (k * (k - 2) / 2);
    }
  else
    {
      const long long re = (rows + 1) / 2, ro = rows / 2;
      const long long ce = (cols + 1) / 2, co = cols / 2;
      c->adds += n_stripes * 2 * (co + ro);
      c->mults += n_stripes * static_cast<long long>(rows);
      c->fmas += n_stripes * (re * ce + ro * co - rows);
    }
}

} // namespace dg
