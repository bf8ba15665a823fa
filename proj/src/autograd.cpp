#include "weldood/autograd.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace weldood::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) {
    throw std::invalid_argument(std::string("autograd: ") + what);
  }
}

Graph& same_graph(Var a, Var b) {
  require(a.graph != nullptr && a.graph == b.graph, "operands belong to different graphs");
  return *a.graph;
}

}  // namespace

Param::Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
  grad = Matrix::Zero(value.rows(), value.cols());
}

void Param::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return graph->value(id); }
const Matrix& Var::grad() const { return graph->grad(id); }

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Param& p) {
  nodes_.push_back(Node{p.value, Matrix(), nullptr, &p});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() == 0) {
    static const Matrix empty;
    return empty;
  }
  return n.grad;
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  assert(g.rows() == n.value.rows() && g.cols() == n.value.cols());
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var loss) {
  require(loss.graph == this, "loss belongs to another graph");
  require(loss.rows() == 1 && loss.cols() == 1, "backward() needs a scalar loss");
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) {
      continue;
    }
    if (n.backward) {
      // Copy: the callback may push into nodes_ only through accumulate(),
      // which never reallocates, but keep the gradient stable regardless.
      const Matrix g = n.grad;
      n.backward(*this, g);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Matrix out = a.value() * b.value();
  const int ia = a.id;
  const int ib = b.id;
  return g.record(std::move(out), [ia, ib](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d * gr.value(ib).transpose());
    gr.accumulate(ib, gr.value(ia).transpose() * d);
  });
}

Var operator+(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  const int ia = a.id;
  const int ib = b.id;
  return g.record(a.value() + b.value(), [ia, ib](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d);
    gr.accumulate(ib, d);
  });
}

Var operator-(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  const int ia = a.id;
  const int ib = b.id;
  return g.record(a.value() - b.value(), [ia, ib](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d);
    gr.accumulate(ib, -d);
  });
}

Var operator*(Var a, double s) {
  const int ia = a.id;
  return a.graph->record(a.value() * s, [ia, s](Graph& gr, const Matrix& d) { gr.accumulate(ia, d * s); });
}

Var hadamard(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard shape mismatch");
  const int ia = a.id;
  const int ib = b.id;
  return g.record(a.value().cwiseProduct(b.value()), [ia, ib](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d.cwiseProduct(gr.value(ib)));
    gr.accumulate(ib, d.cwiseProduct(gr.value(ia)));
  });
}

Var add_row(Var a, Var bias) {
  Graph& g = same_graph(a, bias);
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row shape mismatch");
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  const int ia = a.id;
  const int ib = bias.id;
  return g.record(std::move(out), [ia, ib](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d);
    gr.accumulate(ib, d.colwise().sum());
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  Matrix deriv(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double u = c * (v + k * v * v * v);
    const double t = std::tanh(u);
    out.data()[i] = 0.5 * v * (1.0 + t);
    deriv.data()[i] = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
  }
  const int ia = a.id;
  return a.graph->record(std::move(out), [ia, deriv = std::move(deriv)](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d.cwiseProduct(deriv));
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const int ia = a.id;
  const int io = static_cast<int>(a.graph->size());
  return a.graph->record(std::move(out), [ia, io](Graph& gr, const Matrix& d) {
    const Matrix& y = gr.value(io);
    gr.accumulate(ia, d.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var stop_gradient(Var a) { return a.graph->constant(a.value()); }

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  Graph& g = same_graph(a, gamma);
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n,
          "layer_norm parameter shape mismatch");
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * rstd(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ia = a.id;
  const int ig = gamma.id;
  const int ib = beta.id;
  return g.record(std::move(out), [ia, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](
                                      Graph& gr, const Matrix& d) {
    gr.accumulate(ib, d.colwise().sum());
    gr.accumulate(ig, d.cwiseProduct(xhat).colwise().sum());
    Matrix dxhat = d;
    dxhat.array().rowwise() *= gr.value(ig).row(0).array();
    Matrix dx(d.rows(), d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const double m1 = dxhat.row(r).mean();
      const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
      dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
    }
    gr.accumulate(ia, dx);
  });
}

Var softmax_rows(Var a, bool causal) {
  const Matrix& x = a.value();
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(r + 1, x.cols()) : x.cols();
    const double mx = x.row(r).head(width).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < width; ++c) {
      p(r, c) = std::exp(x(r, c) - mx);
      total += p(r, c);
    }
    p.row(r).head(width) /= total;
  }
  const int ia = a.id;
  const int io = static_cast<int>(a.graph->size());
  return a.graph->record(std::move(p), [ia, io](Graph& gr, const Matrix& d) {
    const Matrix& y = gr.value(io);
    Matrix dx = y.cwiseProduct(d);
    const Eigen::VectorXd dot = dx.rowwise().sum();
    dx -= y.cwiseProduct(dot.replicate(1, y.cols()));
    gr.accumulate(ia, dx);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  const int ia = a.id;
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return a.graph->record(a.value().middleCols(start, count), [=](Graph& gr, const Matrix& d) {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleCols(start, count) = d;
    gr.accumulate(ia, full);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
  const int ia = a.id;
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return a.graph->record(a.value().middleRows(start, count), [=](Graph& gr, const Matrix& d) {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleRows(start, count) = d;
    gr.accumulate(ia, full);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Graph& g = *parts.front().graph;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.graph == &g && p.rows() == rows, "concat_cols mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id, at);
    at += p.cols();
  }
  return g.record(std::move(out), [spans](Graph& gr, const Matrix& d) {
    for (const auto& [id, offset] : spans) {
      gr.accumulate(id, d.middleCols(offset, gr.value(id).cols()));
    }
  });
}

Var transpose(Var a) {
  const int ia = a.id;
  return a.graph->record(a.value().transpose(), [ia](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d.transpose());
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.value().size(), "reshape size mismatch");
  const Eigen::Index in_rows = a.rows();
  const Eigen::Index in_cols = a.cols();
  const Matrix& x = a.value();
  Matrix out(rows, cols);
  for (Eigen::Index f = 0; f < x.size(); ++f) {
    out(f / cols, f % cols) = x(f / in_cols, f % in_cols);
  }
  const int ia = a.id;
  return a.graph->record(std::move(out), [=](Graph& gr, const Matrix& d) {
    Matrix back(in_rows, in_cols);
    for (Eigen::Index f = 0; f < d.size(); ++f) {
      back(f / in_cols, f % in_cols) = d(f / cols, f % cols);
    }
    gr.accumulate(ia, back);
  });
}

Var unfold(Var a, int kernel, int stride, int pad_left, int pad_right) {
  require(kernel >= 1 && stride >= 1 && pad_left >= 0 && pad_right >= 0, "unfold arguments");
  const Eigen::Index length = a.rows();
  const Eigen::Index channels = a.cols();
  const Eigen::Index padded = length + pad_left + pad_right;
  require(padded >= kernel, "unfold input shorter than kernel");
  const Eigen::Index out_rows = (padded - kernel) / stride + 1;
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(out_rows, kernel * channels);
  for (Eigen::Index i = 0; i < out_rows; ++i) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = i * stride - pad_left + k;
      if (src >= 0 && src < length) {
        out.block(i, k * channels, 1, channels) = x.row(src);
      }
    }
  }
  const int ia = a.id;
  return a.graph->record(std::move(out), [=](Graph& gr, const Matrix& d) {
    Matrix back = Matrix::Zero(length, channels);
    for (Eigen::Index i = 0; i < out_rows; ++i) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = i * stride - pad_left + k;
        if (src >= 0 && src < length) {
          back.row(src) += d.block(i, k * channels, 1, channels);
        }
      }
    }
    gr.accumulate(ia, back);
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& t = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), t.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < t.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(indices[i]);
  }
  const int it = table.id;
  const Eigen::Index rows = t.rows();
  const Eigen::Index cols = t.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  return table.graph->record(std::move(out), [=, idx = std::move(idx)](Graph& gr, const Matrix& d) {
    Matrix back = Matrix::Zero(rows, cols);
    for (size_t i = 0; i < idx.size(); ++i) {
      back.row(idx[i]) += d.row(static_cast<Eigen::Index>(i));
    }
    gr.accumulate(it, back);
  });
}

Var mean_rows(Var a) {
  const Eigen::Index rows = a.rows();
  const int ia = a.id;
  return a.graph->record(a.value().colwise().mean(), [=](Graph& gr, const Matrix& d) {
    gr.accumulate(ia, d.replicate(rows, 1) / static_cast<double>(rows));
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  require(static_cast<Eigen::Index>(targets.size()) == z.rows() && z.rows() > 0, "cross_entropy target count");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = targets[static_cast<size_t>(r)];
    require(t >= 0 && t < z.cols(), "cross_entropy target out of range");
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    loss += lse - z(r, t);
    probs.row(r) = (z.row(r).array() - lse).exp();
  }
  const double rows = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / rows;
  std::vector<int> tg(targets.begin(), targets.end());
  const int il = logits.id;
  return logits.graph->record(std::move(out), [il, rows, probs = std::move(probs), tg = std::move(tg)](
                                                  Graph& gr, const Matrix& d) {
    Matrix back = probs;
    for (size_t r = 0; r < tg.size(); ++r) {
      back(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
    }
    gr.accumulate(il, back * (d(0, 0) / rows));
  });
}

Var mean_row_sq_dist(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols() && a.rows() > 0, "mean_row_sq_dist shape mismatch");
  Matrix diff = a.value() - b.value();
  const double rows = static_cast<double>(diff.rows());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / rows;
  const int ia = a.id;
  const int ib = b.id;
  return g.record(std::move(out), [ia, ib, rows, diff = std::move(diff)](Graph& gr, const Matrix& d) {
    const Matrix back = diff * (2.0 * d(0, 0) / rows);
    gr.accumulate(ia, back);
    gr.accumulate(ib, -back);
  });
}

RowVector softmax(const RowVector& logits) {
  const double mx = logits.maxCoeff();
  RowVector e = (logits.array() - mx).exp();
  return e / e.sum();
}

Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = normal(rng);
    }
  }
  return m;
}

Adam::Adam(std::vector<Param*> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() { ad::zero_grad(params_); }

void Adam::step(double grad_scale) {
  ++steps_;
  double clip = 1.0;
  if (options_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Param* p : params_) {
      sq += p->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq) * grad_scale;
    if (norm > options_.clip_norm) {
      clip = options_.clip_norm / norm;
    }
  }
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    const Matrix g = p.grad * (grad_scale * clip);
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.value.array() -= options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
}

void zero_grad(std::span<Param* const> params) {
  for (Param* p : params) {
    p->zero_grad();
  }
}

}  // namespace weldood::ad
