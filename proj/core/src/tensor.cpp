#include "ecnu/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "ecnu/error.hpp"

namespace ecnu {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (element_count(shape) != data.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " elements");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  t.impl_->grad.assign(t.impl_->data.size(), 0.0);
  return t;
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::size() const { return impl().data.size(); }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) return 1;
  return element_count(Shape(s.begin() + 1, s.end()));
}

std::span<const double> Tensor::data() const { return impl().data; }
std::span<double> Tensor::mutable_data() const { return impl().data; }
std::span<const double> Tensor::grad() const { return impl().grad; }
std::span<double> Tensor::mutable_grad() const { return impl().grad; }
bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return impl().data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) {
    throw IndexError("(" + std::to_string(row) + ", " + std::to_string(col) +
                     ") outside tensor of shape " + to_string(shape()));
  }
  return impl().data[row * cols() + col];
}

Tensor Tensor::clone() const {
  if (requires_grad()) return parameter(shape(), impl().data);
  return from(shape(), impl().data);
}

// ---------------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    entries_.clear();
    return;
  }
  if (loss.impl().producer != this) {
    throw ContractError("backward called with a loss that was not produced on this tape");
  }
  loss.impl().grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

Tensor Tape::make_output(Shape shape, std::vector<double> data,
                         std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  if (!recording_) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor* t) { return t->requires_grad(); });
  if (any) {
    out.impl_->requires_grad = true;
    out.impl_->grad.assign(out.impl_->data.size(), 0.0);
    out.impl_->producer = this;
  }
  return out;
}

Tensor Tape::make_output(Shape shape, std::vector<double> data, std::span<const Tensor> inputs) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  if (!recording_) return out;
  const bool any =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    out.impl_->requires_grad = true;
    out.impl_->grad.assign(out.impl_->data.size(), 0.0);
    out.impl_->producer = this;
  }
  return out;
}

void Tape::record(std::function<void()> adjoint) {
  if (recording_) entries_.push_back(std::move(adjoint));
}

// ---------------------------------------------------------------------------

namespace ops {
namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul inner dimensions differ: " + to_string(a.shape()) + " . " +
                         to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor result = tape.make_output({m, n}, std::move(out), {&a, &b});
  if (result.requires_grad()) {
    tape.record([a, b, result, m, k, n]() mutable {
      const auto g = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        const auto bd = b.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        const auto ad = a.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && a.rank() >= 1 && b.size() == a.cols() &&
                    (b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1));
  if (!same && !bias) {
    throw DimensionError("add shapes are not broadcastable: " + to_string(a.shape()) + " + " +
                         to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.begin(), ad.end());
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  } else {
    const std::size_t cols = a.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % cols];
  }
  Tensor result = tape.make_output(a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    tape.record([a, b, result, same]() mutable {
      const auto g = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        } else {
          const std::size_t cols = gb.size();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        }
      }
    });
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  Tensor result = tape.make_output(a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    tape.record([a, result]() mutable {
      const auto g = result.grad();
      const auto ad = a.data();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (ad[i] > 0.0) ga[i] += g[i];
      }
    });
  }
  return result;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1, got " + std::to_string(axis));
  for (const auto& p : parts) require_rank2(p, "concat");
  const Shape& first = parts.front().shape();
  const std::size_t fixed = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[fixed] != first[fixed]) {
      throw DimensionError("concat shapes disagree off-axis: " + to_string(first) + " vs " +
                           to_string(p.shape()));
    }
    total += p.shape()[axis];
  }
  Shape shape = first;
  shape[axis] = total;
  const std::size_t rows = shape[0], cols = shape[1];
  std::vector<double> out(rows * cols);
  if (axis == 0) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += p.size();
    }
  } else {
    std::size_t col0 = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.shape()[1];
      const auto pd = p.data();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pd.data() + r * pc, pc, out.data() + r * cols + col0);
      }
      col0 += pc;
    }
  }
  Tensor result = tape.make_output(shape, std::move(out), parts);
  if (result.requires_grad()) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record([inputs, result, axis, rows, cols]() mutable {
      const auto g = result.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t extent = p.shape()[axis];
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          if (axis == 0) {
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset * cols + i];
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < extent; ++c) gp[r * extent + c] += g[r * cols + offset + c];
            }
          }
        }
        offset += extent;
      }
    });
  }
  return result;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> indices) {
  require_rank2(table, "gather_rows");
  const std::size_t n = table.shape()[0], d = table.shape()[1];
  const auto td = table.data();
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) {
      throw IndexError("gather_rows index " + std::to_string(indices[r]) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(td.data() + indices[r] * d, d, out.data() + r * d);
  }
  Tensor result = tape.make_output({indices.size(), d}, std::move(out), {&table});
  if (result.requires_grad()) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    tape.record([table, result, idx = std::move(idx), d]() mutable {
      const auto g = result.grad();
      auto gt = table.mutable_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) gt[idx[r] * d + c] += g[r * d + c];
      }
    });
  }
  return result;
}

Tensor segment_sum(Tape& tape, const Tensor& values, std::span<const std::size_t> segments,
                   std::size_t n_segments) {
  require_rank2(values, "segment_sum");
  const std::size_t e = values.shape()[0], d = values.shape()[1];
  if (segments.size() != e) {
    throw DimensionError("segment_sum has " + std::to_string(segments.size()) +
                         " segment ids for values of shape " + to_string(values.shape()));
  }
  // Bucket rows by segment (counting sort keeps ascending row order per bucket).
  std::vector<std::size_t> start(n_segments + 1, 0);
  for (std::size_t s : segments) {
    if (s >= n_segments) {
      throw IndexError("segment id " + std::to_string(s) + " out of range for " +
                       std::to_string(n_segments) + " segments");
    }
    ++start[s + 1];
  }
  for (std::size_t s = 0; s < n_segments; ++s) start[s + 1] += start[s];
  std::vector<std::size_t> order(e);
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t r = 0; r < e; ++r) order[fill[segments[r]]++] = r;
  }

  const auto vd = values.data();
  std::vector<double> out(n_segments * d, 0.0);
  std::vector<double> column;
  for (std::size_t s = 0; s < n_segments; ++s) {
    const std::size_t lo = start[s], hi = start[s + 1];
    if (hi == lo) continue;
    if (hi - lo == 1) {
      std::copy_n(vd.data() + order[lo] * d, d, out.data() + s * d);
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) {
      column.clear();
      for (std::size_t i = lo; i < hi; ++i) column.push_back(vd[order[i] * d + c]);
      std::sort(column.begin(), column.end());
      double acc = column[0];
      for (std::size_t i = 1; i < column.size(); ++i) acc += column[i];
      out[s * d + c] = acc;
    }
  }
  Tensor result = tape.make_output({n_segments, d}, std::move(out), {&values});
  if (result.requires_grad()) {
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    tape.record([values, result, seg = std::move(seg), d]() mutable {
      const auto g = result.grad();
      auto gv = values.mutable_grad();
      for (std::size_t r = 0; r < seg.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) gv[r * d + c] += g[seg[r] * d + c];
      }
    });
  }
  return result;
}

Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse shapes differ: " + to_string(pred.shape()) + " vs " +
                         to_string(target.shape()));
  }
  const auto pd = pred.data();
  const auto td = target.data();
  const double count = static_cast<double>(pd.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double diff = pd[i] - td[i];
    acc += diff * diff;
  }
  Tensor result = tape.make_output({}, {acc / count}, {&pred, &target});
  if (result.requires_grad()) {
    tape.record([pred, target, result, count]() mutable {
      const double g = result.grad()[0];
      const auto pd = pred.data();
      const auto td = target.data();
      if (pred.requires_grad()) {
        auto gp = pred.mutable_grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * 2.0 * (pd[i] - td[i]) / count;
      }
      if (target.requires_grad()) {
        auto gt = target.mutable_grad();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * 2.0 * (pd[i] - td[i]) / count;
      }
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor result = tape.make_output({}, {acc}, {&a});
  if (result.requires_grad()) {
    tape.record([a, result]() mutable {
      const double g = result.grad()[0];
      for (double& ga : a.mutable_grad()) ga += g;
    });
  }
  return result;
}

}  // namespace ops
}  // namespace ecnu
