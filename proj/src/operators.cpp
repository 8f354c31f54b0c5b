#include <dg/operators.hpp>
#include <dg/tensor_kernels.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace dg
{

const char *to_string(OperatorKind k)
{
  switch (k)
    {
    case OperatorKind::mass:
      return "mass";
    case OperatorKind::inverse_mass:
      return "inverse_mass";
    case OperatorKind::advection:
      return "advection";
    case OperatorKind::laplacian:
      return "laplacian";
    }
  return "?";
}

OperatorConfig make_operator_config(OperatorKind kind, int d, int p, int W,
                                    GeometryVariant geometry)
{
  OperatorConfig cfg;
  cfg.kind = kind;
  cfg.d = d;
  cfg.p = p;
  cfg.W = W;
  cfg.geometry = geometry;
  if (kind == OperatorKind::laplacian && p >= 3)
    cfg.basis = BasisKind::hermite_like;
  else
    cfg.basis = BasisKind::lagrange_gauss_lobatto;
  return cfg;
}

struct RankOperator::Impl
{
  virtual ~Impl() = default;
  virtual const DoFLayout &layout() const = 0;
  virtual const OperatorConfig &config() const = 0;
  virtual void apply(GhostedVector &u, GhostedVector &y,
                     const ExchangeHooks *hooks) = 0;
  virtual void assemble_rhs(GhostedVector &rhs) = 0;
  virtual const KernelCounters &counters() const = 0;
  virtual void reset_counters() = 0;
  virtual long long expected_cell_invocations() const = 0;
  virtual long long expected_inner_face_invocations() const = 0;
  virtual long long expected_boundary_face_invocations() const = 0;
};

namespace
{

long long ipow(int b, int e)
{
  long long r = 1;
  while (e--)
    r *= b;
  return r;
}

// Nonzero entries of a 1 x k evaluation row, exploiting the sparsity of
// bases that are nodal or Hermite-type on faces.
std::vector<int> row_support(const std::vector<double> &row)
{
  std::vector<int> s;
  for (int j = 0; j < static_cast<int>(row.size()); ++j)
    if (row[j] != 0.0)
      s.push_back(j);
  if (s.empty())
    s.push_back(0);
  return s;
}

template <int W>
class OperatorImpl final : public RankOperator::Impl
{
public:
  using T = LaneBatch<W>;

  OperatorImpl(const Mesh &mesh, const Partition &partition,
               const std::vector<RawFace> &faces,
               std::shared_ptr<const GeometryCache> geom,
               const OperatorConfig &cfg, int rank)
    : cfg_(cfg), mesh_(mesh), geom_(std::move(geom))
  {
    d_ = cfg.d;
    k_ = cfg.k();
    if (mesh.d != d_)
      throw std::invalid_argument("RankOperator: mesh dimension mismatch");
    if (cfg.basis == BasisKind::hermite_like && cfg.p < 3)
      throw std::invalid_argument(
        "RankOperator: the Hermite-type basis needs degree >= 3");
    if (!geom_ || geom_->k != k_ || geom_->l != k_ ||
        geom_->equation != cfg.equation() || geom_->variant != cfg.geometry)
      throw std::invalid_argument(
        "RankOperator: geometry cache does not match the configuration");

    basis_ = make_basis(cfg.basis, cfg.p);
    sm_ = shape_matrices(basis_, gauss_quadrature(k_));
    form_S_ = sm_.symmetric ? MatrixForm::even_odd : MatrixForm::plain;
    form_D_ = sm_.symmetric && !sm_.Dco_eo.empty() ? MatrixForm::even_odd
                                                   : MatrixForm::plain;

    if (cfg.kind == OperatorKind::inverse_mass)
      {
        Eigen::MatrixXd s(k_, k_);
        for (int q = 0; q < k_; ++q)
          for (int j = 0; j < k_; ++j)
            s(q, j) = sm_.S[q * k_ + j];
        const Eigen::MatrixXd inv = s.inverse();
        sm_inv_.k = sm_inv_.l = k_;
        sm_inv_.S.resize(k_ * k_);
        for (int q = 0; q < k_; ++q)
          for (int j = 0; j < k_; ++j)
            sm_inv_.S[q * k_ + j] = inv(q, j);
        if (sm_.symmetric)
          try
            {
              sm_inv_.S_eo = pack_even_odd(sm_inv_.S.data(), k_, k_, false);
              sm_inv_.symmetric = true;
            }
          catch (const std::exception &)
            {
              sm_inv_.symmetric = false;
            }
      }

    layout_ = build_dof_layout(mesh, partition, faces, rank, k_, W);
    nq_ = ipow(k_, d_);
    nf_ = ipow(k_, d_ - 1);

    // Allocate work buffers once.
    ub_.resize(nq_);
    yb_.resize(nq_);
    coll_.resize(nq_);
    tmp_.resize(nq_);
    grad_.resize(d_ * nq_);
    scratch_.resize(3 * nq_);
    jxw_.resize(nq_);
    jit_.resize(nq_ * d_ * d_);
    coeff_.resize(nq_ * std::max(d_, n_symmetric_entries(d_)));
    xq_.resize(nq_ * d_);
    cellbuf_.resize(nq_);
    for (int s = 0; s < 2; ++s)
      {
        flayer_[s].resize(2 * nf_);
        uq_[s].resize(nf_);
        wn_[s].resize(nf_);
        rv_[s].resize(nf_);
        rw_[s].resize(nf_);
        out2_[s].resize(2 * nf_);
        for (int t = 0; t < 2; ++t)
          {
            dt_[s][t].resize(nf_);
            rt_[s][t].resize(nf_);
          }
      }
    jxwf_.resize(nf_);
    jnif_.resize(nf_ * d_);
    jnef_.resize(nf_ * d_);
    cdn_.resize(nf_);
    gq_.resize(nf_);
    if (cfg.geometry == GeometryVariant::g2)
      {
        g2_coords_.resize(d_ * nq_);
        g2_grads_.resize(d_ * d_ * nq_);
      }

    if (cfg.geometry == GeometryVariant::g1)
      {
        map_basis_ = make_basis(BasisKind::lagrange_gauss_lobatto,
                                geom_->mapping_degree);
        qxi_.resize(nq_ * d_);
        for (long long q = 0; q < nq_; ++q)
          {
            long long idx = q;
            for (int a = 0; a < d_; ++a)
              {
                qxi_[q * d_ + a] = geom_->quad1d.points[idx % k_];
                idx /= k_;
              }
          }
      }

    build_schedule();
    expected_cell_ = compute_expected_cell();
    expected_inner_ = compute_expected_inner();
    expected_boundary_ = compute_expected_boundary();
  }

  const DoFLayout &layout() const override { return layout_; }
  const OperatorConfig &config() const override { return cfg_; }
  const KernelCounters &counters() const override { return counters_; }
  void reset_counters() override { counters_ = KernelCounters(); }
  long long expected_cell_invocations() const override
  {
    return expected_cell_;
  }
  long long expected_inner_face_invocations() const override
  {
    return expected_inner_;
  }
  long long expected_boundary_face_invocations() const override
  {
    return expected_boundary_;
  }

  void apply(GhostedVector &u, GhostedVector &y,
             const ExchangeHooks *hooks) override
  {
    if (u.data.size() != static_cast<std::size_t>(layout_.total_size) ||
        y.data.size() != static_cast<std::size_t>(layout_.total_size))
      throw std::invalid_argument("apply: vector size mismatch");

    const bool has_faces = cfg_.kind == OperatorKind::advection ||
                           cfg_.kind == OperatorKind::laplacian;
    if (!has_faces)
      {
        // Mass operators are cell-local; no ghost data is ever read.
        for (int b = 0; b < layout_.n_cell_batches; ++b)
          process_cell_batch(b, u, y);
        y.state = VectorState::clean;
        return;
      }

    const bool have_ghosts = !layout_.ghost_global_cells.empty();
    if (hooks && hooks->start_ghost_update)
      hooks->start_ghost_update(u);
    else if (have_ghosts)
      throw std::logic_error(
        "apply: layout has ghost cells but no exchange hooks were given");
    else
      u.state = VectorState::ghosts_valid;

    y.zero_ghosts();
    for (int b = 0; b < layout_.n_cell_batches; ++b)
      {
        process_cell_batch(b, u, y);
        for (const FaceRef &fr : schedule_[b])
          {
            ensure_ghosts_readable(u, fr, hooks);
            if (fr.boundary)
              process_boundary_batch(fr.idx, &u, y, false);
            else
              process_interior_batch(fr.idx, u, y);
          }
      }

    if (have_ghosts)
      y.state = VectorState::has_remote_contributions;
    if (hooks && hooks->compress)
      hooks->compress(y);
    else
      y.state = VectorState::clean;
  }

  void assemble_rhs(GhostedVector &rhs) override
  {
    if (rhs.data.size() != static_cast<std::size_t>(layout_.total_size))
      throw std::invalid_argument("assemble_rhs: vector size mismatch");
    std::fill(rhs.data.begin(), rhs.data.end(), 0.0);
    rhs.state = VectorState::clean;

    if (cfg_.forcing)
      add_forcing(rhs);

    const bool has_faces = cfg_.kind == OperatorKind::advection ||
                           cfg_.kind == OperatorKind::laplacian;
    if (cfg_.dirichlet && has_faces)
      for (int fb = 0;
           fb < static_cast<int>(layout_.boundary_face_batches.size()); ++fb)
        process_boundary_batch(fb, nullptr, rhs, true);
  }

private:
  struct FaceRef
  {
    bool boundary;
    int idx;
  };

  // ---- setup ------------------------------------------------------------

  void build_schedule()
  {
    const int nb = std::max(1, layout_.n_cell_batches);
    schedule_.assign(nb, {});
    auto ready_batch = [&](const FaceInfoBatch &b, bool touches_ghosts) {
      int ready = 0;
      auto owned_batch = [&](std::uint32_t cell) {
        if (cell == invalid_cell)
          return;
        if (cell < layout_.owned_cell_begin ||
            cell >= layout_.owned_cell_begin + layout_.n_owned_cells)
          return;
        ready = std::max(ready,
                         static_cast<int>((cell - layout_.owned_cell_begin) /
                                          W));
      };
      for (int l = 0; l < b.n_lanes_filled; ++l)
        {
          owned_batch(b.interior_cell_numbers[l]);
          owned_batch(b.exterior_cell_numbers[l]);
        }
      // Ghost-coupled faces go last so that the ghost transfer can overlap
      // with the interior work.
      if (touches_ghosts)
        ready = nb - 1;
      return std::min(ready, nb - 1);
    };
    for (int i = 0;
         i < static_cast<int>(layout_.interior_face_batches.size()); ++i)
      {
        const bool tg = layout_.interior_face_info[i][0].touches_ghosts ||
                        layout_.interior_face_info[i][1].touches_ghosts;
        schedule_[ready_batch(layout_.interior_face_batches[i], tg)].push_back(
          {false, i});
      }
    for (int i = 0;
         i < static_cast<int>(layout_.boundary_face_batches.size()); ++i)
      schedule_[ready_batch(layout_.boundary_face_batches[i],
                            layout_.boundary_face_info[i].touches_ghosts)]
        .push_back({true, i});
  }

  long long compute_expected_cell() const
  {
    switch (cfg_.kind)
      {
      case OperatorKind::mass:
      case OperatorKind::inverse_mass:
        return 2 * d_;
      case OperatorKind::advection:
        return 3 * d_;
      case OperatorKind::laplacian:
        return 4 * d_;
      }
    return 0;
  }
  long long compute_expected_inner() const
  {
    if (cfg_.kind == OperatorKind::advection)
      return 4 * (d_ - 1) + 4;
    if (cfg_.kind == OperatorKind::laplacian)
      return 12 * (d_ - 1) + 8;
    return 0;
  }
  long long compute_expected_boundary() const
  {
    if (cfg_.kind == OperatorKind::advection)
      return 2 * (d_ - 1) + 2;
    if (cfg_.kind == OperatorKind::laplacian)
      return 6 * (d_ - 1) + 4;
    return 0;
  }

  void ensure_ghosts_readable(GhostedVector &u, const FaceRef &fr,
                              const ExchangeHooks *hooks)
  {
    const bool tg =
      fr.boundary
        ? layout_.boundary_face_info[fr.idx].touches_ghosts
        : (layout_.interior_face_info[fr.idx][0].touches_ghosts ||
           layout_.interior_face_info[fr.idx][1].touches_ghosts);
    if (!tg || u.state == VectorState::ghosts_valid)
      return;
    if (hooks && hooks->finish_ghost_update)
      hooks->finish_ghost_update(u);
    else
      throw std::logic_error(
        "apply: ghost-coupled face reached without a way to finish the "
        "ghost update");
  }

  // ---- per-batch geometry -----------------------------------------------

  int batch_cell(int b, int l) const
  {
    const int nl = layout_.cell_info[b].n_lanes_filled;
    return static_cast<int>(layout_.owned_cell_begin) + b * W +
           (l < nl ? l : 0);
  }

  void load_cell_geometry(int b)
  {
    const GeometryCache &g = *geom_;
    const int dd = d_ * d_;
    const bool advection = cfg_.kind == OperatorKind::advection;
    const bool need_x = advection && !cfg_.velocity.is_constant() &&
                        cfg_.geometry != GeometryVariant::g4;

    for (int l = 0; l < W; ++l)
      {
        const int cell = batch_cell(b, l);
        switch (cfg_.geometry)
          {
          case GeometryVariant::g4:
            {
              if (cfg_.kind == OperatorKind::mass ||
                  cfg_.kind == OperatorKind::inverse_mass)
                {
                  for (long long q = 0; q < nq_; ++q)
                    jxw_[q][l] = g.cell_jxw(cell, q);
                  break;
                }
              const int pl = advection ? d_ : n_symmetric_entries(d_);
              if (g.compressed())
                for (long long q = 0; q < nq_; ++q)
                  for (int i = 0; i < pl; ++i)
                    coeff_[q * pl + i][l] =
                      g.coeff[static_cast<long long>(cell) * pl + i] *
                      g.wq_cell[q];
              else
                for (long long q = 0; q < nq_; ++q)
                  for (int i = 0; i < pl; ++i)
                    coeff_[q * pl + i][l] =
                      g.coeff[(static_cast<long long>(cell) * nq_ + q) * pl +
                              i];
              break;
            }
          case GeometryVariant::g3:
            for (long long q = 0; q < nq_; ++q)
              {
                jxw_[q][l] = g.cell_jxw(cell, q);
                const double *jit = g.cell_inv_jac_t(cell, q);
                for (int i = 0; i < dd; ++i)
                  jit_[q * dd + i][l] = jit[i];
                if (need_x)
                  for (int a = 0; a < d_; ++a)
                    xq_[q * d_ + a][l] =
                      g.qpoints[(static_cast<long long>(cell) * nq_ + q) *
                                  d_ +
                                a];
              }
            break;
          case GeometryVariant::g2:
            {
              // Jacobian from collocation derivatives of the stored
              // quadrature point coordinates; geometry work is not charged
              // to the kernel counters.
              for (int i = 0; i < d_; ++i)
                {
                  for (long long q = 0; q < nq_; ++q)
                    g2_coords_[i * nq_ + q] =
                      g.qpoints[(static_cast<long long>(cell) * nq_ + q) *
                                  d_ +
                                i];
                  collocation_derivative<double>(
                    d_, true, k_, false, sm_, g2_coords_.data() + i * nq_,
                    g2_grads_.data() + i * d_ * nq_, nullptr);
                }
              for (long long q = 0; q < nq_; ++q)
                {
                  double jac[9], jit[9];
                  for (int i = 0; i < d_; ++i)
                    for (int a = 0; a < d_; ++a)
                      jac[i * d_ + a] = g2_grads_[(i * d_ + a) * nq_ + q];
                  const double det = invert_jacobian(d_, jac, jit);
                  jxw_[q][l] = det * g.wq_cell[q];
                  for (int i = 0; i < dd; ++i)
                    jit_[q * dd + i][l] = jit[i];
                  if (need_x)
                    for (int a = 0; a < d_; ++a)
                      xq_[q * d_ + a][l] = g2_coords_[a * nq_ + q];
                }
              break;
            }
          case GeometryVariant::g1:
            {
              const double *sup =
                g.mapping_support.data() +
                static_cast<long long>(cell) *
                  ipow(geom_->mapping_degree + 1, d_) * d_;
              for (long long q = 0; q < nq_; ++q)
                {
                  double x[3], jac[9], jit[9];
                  mapping_point_jacobian(map_basis_, d_, sup,
                                         qxi_.data() + q * d_,
                                         need_x ? x : nullptr, jac);
                  const double det = invert_jacobian(d_, jac, jit);
                  jxw_[q][l] = det * g.wq_cell[q];
                  for (int i = 0; i < dd; ++i)
                    jit_[q * dd + i][l] = jit[i];
                  if (need_x)
                    for (int a = 0; a < d_; ++a)
                      xq_[q * d_ + a][l] = x[a];
                }
              break;
            }
          }
      }
  }

  void load_face_geometry(const FaceInfoBatch &b)
  {
    const GeometryCache &g = *geom_;
    const bool advection = cfg_.kind == OperatorKind::advection;
    const bool variable_c = advection && !cfg_.velocity.is_constant();
    for (int l = 0; l < W; ++l)
      {
        const std::uint32_t fid =
          b.face_ids[l < b.n_lanes_filled ? l : 0];
        tau_[l] = g.penalty[fid];
        for (long long q = 0; q < nf_; ++q)
          {
            const long long base = (fid * nf_ + q);
            jxwf_[q][l] = g.face_jxw[base];
            for (int i = 0; i < d_; ++i)
              {
                jnif_[q * d_ + i][l] = g.face_jni[base * d_ + i];
                jnef_[q * d_ + i][l] = g.face_jne[base * d_ + i];
              }
            if (advection)
              {
                double c[3] = {cfg_.velocity.constant[0],
                               cfg_.velocity.constant[1],
                               cfg_.velocity.constant[2]};
                if (variable_c)
                  {
                    std::array<double, 3> x{0, 0, 0};
                    for (int i = 0; i < d_; ++i)
                      x[i] = g.face_qpoints[base * d_ + i];
                    const auto cv = cfg_.velocity(x);
                    for (int i = 0; i < d_; ++i)
                      c[i] = cv[i];
                  }
                double s = 0;
                for (int i = 0; i < d_; ++i)
                  s += c[i] * g.face_normal[base * d_ + i];
                cdn_[q][l] = s;
              }
          }
      }
  }

  void load_dirichlet_values(const FaceInfoBatch &b)
  {
    const GeometryCache &g = *geom_;
    for (int l = 0; l < W; ++l)
      {
        const std::uint32_t fid =
          b.face_ids[l < b.n_lanes_filled ? l : 0];
        for (long long q = 0; q < nf_; ++q)
          {
            std::array<double, 3> x{0, 0, 0};
            for (int i = 0; i < d_; ++i)
              x[i] = g.face_qpoints[(fid * nf_ + q) * d_ + i];
            gq_[q][l] = cfg_.dirichlet(x);
          }
      }
  }

  // ---- cell integrals ---------------------------------------------------

  void process_cell_batch(int b, const GhostedVector &u, GhostedVector &y)
  {
    const EntityIndexInfo &info = layout_.cell_info[b];
    gather_cell<W>(layout_, u, info, ub_.data());
    load_cell_geometry(b);

    const long long before = counters_.kernel_invocations;
    switch (cfg_.kind)
      {
      case OperatorKind::mass:
        cell_mass();
        break;
      case OperatorKind::inverse_mass:
        cell_inverse_mass();
        break;
      case OperatorKind::advection:
        cell_advection();
        break;
      case OperatorKind::laplacian:
        cell_laplacian();
        break;
      }
    if (counters_.kernel_invocations - before != expected_cell_)
      throw std::logic_error(
        "cell batch kernel count deviates from the schedule");

    scatter_cell<W>(layout_, info, yb_.data(), false, y);
  }

  void cell_mass()
  {
    basis_change<T>(d_, true, k_, k_, false, sm_, ub_.data(), coll_.data(),
                    scratch_.data(), &counters_, form_S_);
    for (long long q = 0; q < nq_; ++q)
      coll_[q] = coll_[q] * jxw_[q];
    basis_change<T>(d_, false, k_, k_, false, sm_, coll_.data(), yb_.data(),
                    scratch_.data(), &counters_, form_S_);
  }

  void cell_inverse_mass()
  {
    const MatrixForm form =
      sm_inv_.symmetric ? MatrixForm::even_odd : MatrixForm::plain;
    // M^{-1} = S^{-1} diag(1/JxW) S^{-T} for the square quadrature S.
    basis_change<T>(d_, false, k_, k_, false, sm_inv_, ub_.data(),
                    coll_.data(), scratch_.data(), &counters_, form);
    for (long long q = 0; q < nq_; ++q)
      for (int l = 0; l < W; ++l)
        coll_[q][l] /= jxw_[q][l];
    basis_change<T>(d_, true, k_, k_, false, sm_inv_, coll_.data(),
                    yb_.data(), scratch_.data(), &counters_, form);
  }

  void velocity_at(long long q, T *c) const
  {
    if (cfg_.velocity.is_constant())
      for (int i = 0; i < d_; ++i)
        c[i] = T(cfg_.velocity.constant[i]);
    else
      for (int l = 0; l < W; ++l)
        {
          std::array<double, 3> x{0, 0, 0};
          for (int a = 0; a < d_; ++a)
            x[a] = xq_[q * d_ + a][l];
          const auto cv = cfg_.velocity(x);
          for (int i = 0; i < d_; ++i)
            c[i][l] = cv[i];
        }
  }

  void cell_advection()
  {
    basis_change<T>(d_, true, k_, k_, false, sm_, ub_.data(), coll_.data(),
                    scratch_.data(), &counters_, form_S_);
    const int dd = d_ * d_;
    for (long long q = 0; q < nq_; ++q)
      {
        const T u = coll_[q];
        if (cfg_.geometry == GeometryVariant::g4)
          {
            // The coefficient already folds J^{-1} c detJ w; the cell term
            // enters the operator with a minus sign.
            for (int i = 0; i < d_; ++i)
              grad_[i * nq_ + q] = -(coeff_[q * d_ + i] * u);
          }
        else
          {
            T c[3];
            velocity_at(q, c);
            const T uw = u * jxw_[q];
            for (int i = 0; i < d_; ++i)
              {
                T acc = jit_[q * dd + i] * c[0];
                for (int j = 1; j < d_; ++j)
                  acc += jit_[q * dd + j * d_ + i] * c[j];
                grad_[i * nq_ + q] = -(acc * uw);
              }
          }
      }
    collocation_derivative<T>(d_, false, k_, false, sm_, grad_.data(),
                              tmp_.data(), &counters_, form_D_);
    basis_change<T>(d_, false, k_, k_, false, sm_, tmp_.data(), yb_.data(),
                    scratch_.data(), &counters_, form_S_);
  }

  void laplacian_coefficient(long long q, T *g) const
  {
    if (cfg_.geometry == GeometryVariant::g4)
      {
        const int ns = n_symmetric_entries(d_);
        const T *c = coeff_.data() + q * ns;
        T t[3];
        if (d_ == 2)
          {
            t[0] = c[0] * g[0] + c[2] * g[1];
            t[1] = c[2] * g[0] + c[1] * g[1];
          }
        else
          {
            t[0] = c[0] * g[0] + c[3] * g[1] + c[4] * g[2];
            t[1] = c[3] * g[0] + c[1] * g[1] + c[5] * g[2];
            t[2] = c[4] * g[0] + c[5] * g[1] + c[2] * g[2];
          }
        for (int i = 0; i < d_; ++i)
          g[i] = t[i];
        return;
      }
    const int dd = d_ * d_;
    T phys[3], t[3];
    for (int i = 0; i < d_; ++i)
      {
        T acc = jit_[q * dd + i * d_] * g[0];
        for (int j = 1; j < d_; ++j)
          acc += jit_[q * dd + i * d_ + j] * g[j];
        phys[i] = acc;
      }
    for (int i = 0; i < d_; ++i)
      {
        T acc = jit_[q * dd + i] * phys[0];
        for (int j = 1; j < d_; ++j)
          acc += jit_[q * dd + j * d_ + i] * phys[j];
        t[i] = acc * jxw_[q];
      }
    for (int i = 0; i < d_; ++i)
      g[i] = t[i];
  }

  void cell_laplacian()
  {
    if (d_ == 3)
      {
        auto qop = [&](long long off, int count, T *dx, T *dy, T *dz) {
          T g[3];
          for (int i = 0; i < count; ++i)
            {
              g[0] = dx[i];
              g[1] = dy[i];
              g[2] = dz[i];
              laplacian_coefficient(off + i, g);
              dx[i] = g[0];
              dy[i] = g[1];
              dz[i] = g[2];
            }
        };
        tiled_cell_laplacian<T>(k_, sm_, qop, ub_.data(), yb_.data(),
                                scratch_.data(), &counters_);
        return;
      }
    basis_change<T>(d_, true, k_, k_, false, sm_, ub_.data(), coll_.data(),
                    scratch_.data(), &counters_, form_S_);
    collocation_derivative<T>(d_, true, k_, false, sm_, coll_.data(),
                              grad_.data(), &counters_, form_D_);
    T g[3];
    for (long long q = 0; q < nq_; ++q)
      {
        for (int i = 0; i < d_; ++i)
          g[i] = grad_[i * nq_ + q];
        laplacian_coefficient(q, g);
        for (int i = 0; i < d_; ++i)
          grad_[i * nq_ + q] = g[i];
      }
    collocation_derivative<T>(d_, false, k_, false, sm_, grad_.data(),
                              tmp_.data(), &counters_, form_D_);
    basis_change<T>(d_, false, k_, k_, false, sm_, tmp_.data(), yb_.data(),
                    scratch_.data(), &counters_, form_S_);
  }

  // ---- face integrals ---------------------------------------------------

  // Charges one face-normal kernel application combining n_support
  // coefficient layers into (or out of) one face field.
  void charge_face_row(int n_support, KernelCounters *cnt)
  {
    if (!cnt)
      return;
    cnt->kernel_invocations += 1;
    cnt->mults += nf_;
    cnt->fmas += nf_ * (n_support - 1);
  }

  // Interpolates a (d-1)-dimensional coefficient field to the face
  // quadrature points in place (or applies the transpose for integration).
  void face_sweeps(bool transpose, T *field, KernelCounters *cnt)
  {
    int ext[3] = {k_, k_, k_};
    for (int t = 0; t < d_ - 1; ++t)
      apply_1d<T>(form_S_, transpose, t, d_ - 1, ext, sm_.S.data(),
                  &sm_.S_eo, k_, k_, field, field, false, cnt);
  }

  void face_tangential_derivative(int t, const T *val, T *out,
                                  KernelCounters *cnt)
  {
    int ext[3] = {k_, k_, k_};
    apply_1d<T>(form_D_, false, t, d_ - 1, ext, sm_.Dco.data(), &sm_.Dco_eo,
                k_, k_, val, out, false, cnt);
  }

  void face_tangential_integrate(int t, const T *r, T *val_acc,
                                 KernelCounters *cnt)
  {
    int ext[3] = {k_, k_, k_};
    apply_1d<T>(form_D_, true, t, d_ - 1, ext, sm_.Dco.data(), &sm_.Dco_eo,
                k_, k_, r, val_acc, true, cnt);
  }

  // Reads the trace of u on the given cell face into uq (coefficients in
  // the tangential basis, then interpolated to the face quadrature points).
  // With with_derivative set, wn additionally receives the trace of the
  // reference-normal derivative.
  void face_eval(const GhostedVector &u, const EntityIndexInfo &info,
                 int face_number, int s, bool with_derivative)
  {
    const int face = face_number % 2;
    const int axis = face_number / 2;
    const FaceAccess access = basis_.face_access;
    const bool slim =
      (access == FaceAccess::nodal_on_faces && !with_derivative) ||
      (access == FaceAccess::hermite_type_basis);

    if (slim)
      {
        read_face_dofs<W>(layout_, u, info, face_number, access,
                          with_derivative ? 1 : 0, flayer_[s].data());
        if (access == FaceAccess::nodal_on_faces)
          {
            const int jv = basis_.face_support(face, 0)[0];
            const double rv = sm_.Sf[face][jv];
            for (long long f = 0; f < nf_; ++f)
              uq_[s][f] = flayer_[s][f] * rv;
            charge_face_row(1, &counters_);
          }
        else
          {
            const int jv = basis_.face_support(face, 0)[0];
            const int jd = jv == 0 ? 1 : k_ - 2;
            const long long vpos = face == 0 ? 0 : 1;
            const long long dpos = 1 - vpos;
            const double rv = sm_.Sf[face][jv];
            const double rd = sm_.Df[face][jd];
            for (long long f = 0; f < nf_; ++f)
              uq_[s][f] = flayer_[s][vpos * nf_ + f] * rv;
            charge_face_row(1, &counters_);
            if (with_derivative)
              {
                for (long long f = 0; f < nf_; ++f)
                  wn_[s][f] = flayer_[s][dpos * nf_ + f] * rd;
                charge_face_row(1, &counters_);
              }
          }
      }
    else
      {
        gather_cell<W>(layout_, u, info, cellbuf_.data());
        const auto sv = row_support(sm_.Sf[face]);
        face_normal_interpolation<T>(d_, axis, true, k_,
                                     sm_.Sf[face].data(), sv.data(),
                                     static_cast<int>(sv.size()), false,
                                     cellbuf_.data(), uq_[s].data(),
                                     &counters_);
        if (with_derivative)
          {
            const auto sd = row_support(sm_.Df[face]);
            face_normal_interpolation<T>(d_, axis, true, k_,
                                         sm_.Df[face].data(), sd.data(),
                                         static_cast<int>(sd.size()), false,
                                         cellbuf_.data(), wn_[s].data(),
                                         &counters_);
          }
      }

    face_sweeps(false, uq_[s].data(), &counters_);
    if (with_derivative)
      face_sweeps(false, wn_[s].data(), &counters_);
  }

  // Integrates the residual fields of one face side back into the vector:
  // rv multiplies the test value trace, rw (when with_derivative) the trace
  // of its reference-normal derivative.
  void face_integrate(const EntityIndexInfo &info, int face_number, int s,
                      bool with_derivative, GhostedVector &y,
                      KernelCounters *cnt)
  {
    const int face = face_number % 2;
    const int axis = face_number / 2;
    const FaceAccess access = basis_.face_access;
    const bool slim =
      (access == FaceAccess::nodal_on_faces && !with_derivative) ||
      (access == FaceAccess::hermite_type_basis);

    face_sweeps(true, rv_[s].data(), cnt);
    if (with_derivative)
      face_sweeps(true, rw_[s].data(), cnt);

    if (slim)
      {
        if (access == FaceAccess::nodal_on_faces)
          {
            const int jv = basis_.face_support(face, 0)[0];
            const double rvw = sm_.Sf[face][jv];
            for (long long f = 0; f < nf_; ++f)
              out2_[s][f] = rv_[s][f] * rvw;
            charge_face_row(1, cnt);
            distribute_face_dofs<W>(layout_, info, face_number, access, 0,
                                    out2_[s].data(), y);
          }
        else
          {
            const int jv = basis_.face_support(face, 0)[0];
            const int jd = jv == 0 ? 1 : k_ - 2;
            const long long vpos = face == 0 ? 0 : 1;
            const long long dpos = 1 - vpos;
            const double rvw = sm_.Sf[face][jv];
            const double rdw = sm_.Df[face][jd];
            for (long long f = 0; f < nf_; ++f)
              out2_[s][vpos * nf_ + f] = rv_[s][f] * rvw;
            charge_face_row(1, cnt);
            if (with_derivative)
              for (long long f = 0; f < nf_; ++f)
                out2_[s][dpos * nf_ + f] = rw_[s][f] * rdw;
            else
              for (long long f = 0; f < nf_; ++f)
                out2_[s][dpos * nf_ + f] = T(0.0);
            if (with_derivative)
              charge_face_row(1, cnt);
            distribute_face_dofs<W>(layout_, info, face_number, access, 1,
                                    out2_[s].data(), y);
          }
      }
    else
      {
        std::fill(cellbuf_.begin(), cellbuf_.end(), T(0.0));
        const auto sv = row_support(sm_.Sf[face]);
        face_normal_interpolation<T>(d_, axis, false, k_,
                                     sm_.Sf[face].data(), sv.data(),
                                     static_cast<int>(sv.size()), true,
                                     rv_[s].data(), cellbuf_.data(), cnt);
        if (with_derivative)
          {
            const auto sd = row_support(sm_.Df[face]);
            face_normal_interpolation<T>(d_, axis, false, k_,
                                         sm_.Df[face].data(), sd.data(),
                                         static_cast<int>(sd.size()), true,
                                         rw_[s].data(), cellbuf_.data(), cnt);
          }
        scatter_cell<W>(layout_, info, cellbuf_.data(), true, y);
      }
  }

  void process_interior_batch(int fb, const GhostedVector &u,
                              GhostedVector &y)
  {
    const FaceInfoBatch &b = layout_.interior_face_batches[fb];
    const auto &info = layout_.interior_face_info[fb];
    const int fn[2] = {b.interior_face_number, b.exterior_face_number};
    load_face_geometry(b);

    const long long before = counters_.kernel_invocations;
    if (cfg_.kind == OperatorKind::advection)
      {
        for (int s = 0; s < 2; ++s)
          face_eval(u, info[s], fn[s], s, false);
        // The upwind flux is evaluated once per point and applied to both
        // sides with opposite signs.
        for (long long q = 0; q < nf_; ++q)
          {
            T flux;
            for (int l = 0; l < W; ++l)
              flux[l] = advection_numerical_flux(cdn_[q][l], uq_[0][q][l],
                                                 uq_[1][q][l]);
            flux = flux * jxwf_[q];
            rv_[0][q] = flux;
            rv_[1][q] = -flux;
          }
        for (int s = 0; s < 2; ++s)
          face_integrate(info[s], fn[s], s, false, y, &counters_);
      }
    else
      {
        const int axis = fn[0] / 2;
        int tang[2], nt = 0;
        for (int a = 0; a < d_; ++a)
          if (a != axis)
            tang[nt++] = a;

        for (int s = 0; s < 2; ++s)
          {
            face_eval(u, info[s], fn[s], s, true);
            for (int t = 0; t < nt; ++t)
              face_tangential_derivative(t, uq_[s].data(), dt_[s][t].data(),
                                         &counters_);
          }

        for (long long q = 0; q < nf_; ++q)
          {
            // Physical normal derivative of each side from its own
            // reference gradient: normal and tangential components.
            T dn[2];
            for (int s = 0; s < 2; ++s)
              {
                const T *jn = (s == 0 ? jnif_ : jnef_).data() + q * d_;
                T acc = wn_[s][q] * jn[axis];
                for (int t = 0; t < nt; ++t)
                  acc += dt_[s][t][q] * jn[tang[t]];
                dn[s] = acc;
              }
            const T jump = uq_[0][q] - uq_[1][q];
            const T avg_dn = (dn[0] + dn[1]) * 0.5;
            const T r0 = (jump * tau_ - avg_dn) * jxwf_[q];
            rv_[0][q] = r0;
            rv_[1][q] = -r0;
            const T g = -(jump * jxwf_[q] * 0.5);
            for (int s = 0; s < 2; ++s)
              {
                const T *jn = (s == 0 ? jnif_ : jnef_).data() + q * d_;
                rw_[s][q] = g * jn[axis];
                for (int t = 0; t < nt; ++t)
                  rt_[s][t][q] = g * jn[tang[t]];
              }
          }

        for (int s = 0; s < 2; ++s)
          {
            for (int t = 0; t < nt; ++t)
              face_tangential_integrate(t, rt_[s][t].data(), rv_[s].data(),
                                        &counters_);
            face_integrate(info[s], fn[s], s, true, y, &counters_);
          }
      }
    if (counters_.kernel_invocations - before != expected_inner_)
      throw std::logic_error(
        "interior face batch kernel count deviates from the schedule");
  }

  // Boundary faces in operator mode (u given) evaluate the homogeneous part
  // of the mirror principle; in right-hand-side mode (u null) they
  // integrate the Dirichlet data contributions instead.
  void process_boundary_batch(int fb, const GhostedVector *u,
                              GhostedVector &y, bool rhs_mode)
  {
    const FaceInfoBatch &b = layout_.boundary_face_batches[fb];
    const EntityIndexInfo &info = layout_.boundary_face_info[fb];
    const int fn = b.interior_face_number;
    load_face_geometry(b);
    if (rhs_mode)
      load_dirichlet_values(b);
    KernelCounters *cnt = rhs_mode ? nullptr : &counters_;

    const long long before = counters_.kernel_invocations;
    if (cfg_.kind == OperatorKind::advection)
      {
        if (!rhs_mode)
          {
            face_eval(*u, info, fn, 0, false);
            // Mirror u+ = -u-: the flux reduces to |c.n| u-.
            for (long long q = 0; q < nf_; ++q)
              {
                T flux;
                for (int l = 0; l < W; ++l)
                  flux[l] = std::abs(cdn_[q][l]) * uq_[0][q][l];
                rv_[0][q] = flux * jxwf_[q];
              }
          }
        else
          {
            // The g part of the mirrored flux, moved to the right-hand
            // side: (|c.n| - c.n) g, nonzero on inflow only.
            for (long long q = 0; q < nf_; ++q)
              {
                T r;
                for (int l = 0; l < W; ++l)
                  r[l] = (std::abs(cdn_[q][l]) - cdn_[q][l]) * gq_[q][l];
                rv_[0][q] = r * jxwf_[q];
              }
          }
        face_integrate(info, fn, 0, false, y, cnt);
      }
    else
      {
        const int axis = fn / 2;
        int tang[2], nt = 0;
        for (int a = 0; a < d_; ++a)
          if (a != axis)
            tang[nt++] = a;

        if (!rhs_mode)
          {
            face_eval(*u, info, fn, 0, true);
            for (int t = 0; t < nt; ++t)
              face_tangential_derivative(t, uq_[0].data(), dt_[0][t].data(),
                                         cnt);
            for (long long q = 0; q < nf_; ++q)
              {
                const T *jn = jnif_.data() + q * d_;
                T dn = wn_[0][q] * jn[axis];
                for (int t = 0; t < nt; ++t)
                  dn += dt_[0][t][q] * jn[tang[t]];
                // Mirror u+ = -u-, dn+ = dn-: jump 2u-, average dn-.
                const T u0 = uq_[0][q];
                rv_[0][q] = (u0 * tau_ * 2.0 - dn) * jxwf_[q];
                const T g = -(u0 * jxwf_[q]);
                rw_[0][q] = g * jn[axis];
                for (int t = 0; t < nt; ++t)
                  rt_[0][t][q] = g * jn[tang[t]];
              }
          }
        else
          {
            for (long long q = 0; q < nf_; ++q)
              {
                const T *jn = jnif_.data() + q * d_;
                const T gb = gq_[q] * jxwf_[q];
                rv_[0][q] = gb * tau_ * 2.0;
                const T gd = -gb;
                rw_[0][q] = gd * jn[axis];
                for (int t = 0; t < nt; ++t)
                  rt_[0][t][q] = gd * jn[tang[t]];
              }
          }
        for (int t = 0; t < nt; ++t)
          face_tangential_integrate(t, rt_[0][t].data(), rv_[0].data(), cnt);
        face_integrate(info, fn, 0, true, y, cnt);
      }
    if (!rhs_mode &&
        counters_.kernel_invocations - before != expected_boundary_)
      throw std::logic_error(
        "boundary face batch kernel count deviates from the schedule");
  }

  // ---- right-hand side --------------------------------------------------

  void add_forcing(GhostedVector &rhs)
  {
    const MappingEval mapping = build_mapping(mesh_, mesh_.mapping_degree);
    std::vector<double> tq(nq_), yc(nq_), scratch(2 * nq_);
    for (std::uint32_t c = 0; c < layout_.n_owned_cells; ++c)
      {
        const int cell = static_cast<int>(layout_.owned_cell_begin + c);
        const double *sup = mapping.cell_support(cell);
        for (long long q = 0; q < nq_; ++q)
          {
            double xi[3] = {0, 0, 0};
            long long idx = q;
            for (int a = 0; a < d_; ++a)
              {
                xi[a] = geom_->quad1d.points[idx % k_];
                idx /= k_;
              }
            double x[3], jac[9], jit[9];
            mapping_point_jacobian(mapping.basis, d_, sup, xi, x, jac);
            const double det = invert_jacobian(d_, jac, jit);
            tq[q] = cfg_.forcing({x[0], x[1], d_ > 2 ? x[2] : 0.0}) * det *
                    geom_->wq_cell[q];
          }
        basis_change<double>(d_, false, k_, k_, false, sm_, tq.data(),
                             yc.data(), scratch.data(), nullptr);
        const std::uint32_t start = layout_.cell_storage_start(c);
        const std::uint32_t stride = layout_.cell_storage_stride(c);
        for (long long j = 0; j < nq_; ++j)
          rhs.data[start + j * stride] += yc[j];
      }
  }

  // ---- members ----------------------------------------------------------

  OperatorConfig cfg_;
  Mesh mesh_;
  std::shared_ptr<const GeometryCache> geom_;
  DoFLayout layout_;
  KernelCounters counters_;
  Basis1D basis_;
  Basis1D map_basis_;
  ShapeMatrices1D sm_, sm_inv_;
  MatrixForm form_S_ = MatrixForm::plain;
  MatrixForm form_D_ = MatrixForm::plain;
  int d_ = 0, k_ = 0;
  long long nq_ = 0, nf_ = 0;
  long long expected_cell_ = 0, expected_inner_ = 0, expected_boundary_ = 0;
  std::vector<std::vector<FaceRef>> schedule_;

  std::vector<T> ub_, yb_, coll_, tmp_, grad_, scratch_;
  std::vector<T> jxw_, jit_, coeff_, xq_;
  std::vector<T> cellbuf_;
  std::vector<T> flayer_[2], uq_[2], wn_[2], rv_[2], rw_[2], out2_[2];
  std::vector<T> dt_[2][2], rt_[2][2];
  std::vector<T> jxwf_, jnif_, jnef_, cdn_, gq_;
  T tau_;
  std::vector<double> qxi_;
  std::vector<double> g2_coords_, g2_grads_;
};

std::unique_ptr<RankOperator::Impl>
make_impl(const Mesh &mesh, const Partition &partition,
          const std::vector<RawFace> &faces,
          std::shared_ptr<const GeometryCache> geom,
          const OperatorConfig &cfg, int rank)
{
  switch (cfg.W)
    {
    case 1:
      return std::make_unique<OperatorImpl<1>>(mesh, partition, faces,
                                               std::move(geom), cfg, rank);
    case 2:
      return std::make_unique<OperatorImpl<2>>(mesh, partition, faces,
                                               std::move(geom), cfg, rank);
    case 4:
      return std::make_unique<OperatorImpl<4>>(mesh, partition, faces,
                                               std::move(geom), cfg, rank);
    case 8:
      return std::make_unique<OperatorImpl<8>>(mesh, partition, faces,
                                               std::move(geom), cfg, rank);
    default:
      throw std::invalid_argument("RankOperator: unsupported lane count");
    }
}

} // namespace

RankOperator::RankOperator(const Mesh &mesh, const Partition &partition,
                           const std::vector<RawFace> &faces,
                           std::shared_ptr<const GeometryCache> geometry,
                           const OperatorConfig &config, int rank)
  : impl_(make_impl(mesh, partition, faces, std::move(geometry), config,
                    rank))
{
}

RankOperator::~RankOperator() = default;
RankOperator::RankOperator(RankOperator &&) noexcept = default;

const DoFLayout &RankOperator::layout() const { return impl_->layout(); }
const OperatorConfig &RankOperator::config() const { return impl_->config(); }

void RankOperator::apply(GhostedVector &u, GhostedVector &y,
                         const ExchangeHooks *hooks)
{
  impl_->apply(u, y, hooks);
}

void RankOperator::assemble_rhs(GhostedVector &rhs)
{
  impl_->assemble_rhs(rhs);
}

const KernelCounters &RankOperator::counters() const
{
  return impl_->counters();
}

void RankOperator::reset_counters() { impl_->reset_counters(); }

long long RankOperator::expected_cell_invocations() const
{
  return impl_->expected_cell_invocations();
}
long long RankOperator::expected_inner_face_invocations() const
{
  return impl_->expected_inner_face_invocations();
}
long long RankOperator::expected_boundary_face_invocations() const
{
  return impl_->expected_boundary_face_invocations();
}

void to_canonical(const DoFLayout &layout, const GhostedVector &v,
                  std::vector<double> &canonical)
{
  const long long needed =
    static_cast<long long>(layout.owned_cell_begin + layout.n_owned_cells) *
    layout.dofs_per_cell;
  if (static_cast<long long>(canonical.size()) < needed)
    canonical.resize(needed, 0.0);
  for (std::uint32_t c = 0; c < layout.n_owned_cells; ++c)
    {
      const std::uint32_t start = layout.cell_storage_start(c);
      const std::uint32_t stride = layout.cell_storage_stride(c);
      double *out = canonical.data() +
                    static_cast<long long>(layout.owned_cell_begin + c) *
                      layout.dofs_per_cell;
      for (long long j = 0; j < layout.dofs_per_cell; ++j)
        out[j] = v.data[start + j * stride];
    }
}

void from_canonical(const DoFLayout &layout,
                    const std::vector<double> &canonical, GhostedVector &v)
{
  for (std::uint32_t c = 0; c < layout.n_owned_cells; ++c)
    {
      const std::uint32_t start = layout.cell_storage_start(c);
      const std::uint32_t stride = layout.cell_storage_stride(c);
      const double *in = canonical.data() +
                         static_cast<long long>(layout.owned_cell_begin + c) *
                           layout.dofs_per_cell;
      for (long long j = 0; j < layout.dofs_per_cell; ++j)
        v.data[start + j * stride] = in[j];
    }
}

} // namespace dg
