#include "vitseg/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace vitseg {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape(const std::vector<std::size_t>& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw Error(errc::shape_mismatch, "zero-sized dimension in " + shape_str(shape));
    }
}

Tensor::Tensor(std::vector<std::size_t> shape_) : shape(std::move(shape_)) {
    check_shape(shape);
    data.assign(shape_product(shape), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    check_shape(shape);
    if (data.size() != shape_product(shape)) {
        throw Error(errc::shape_mismatch, "data length " + std::to_string(data.size()) +
                                              " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_product(new_shape) != size()) {
        throw Error(errc::shape_mismatch,
                    "cannot reshape " + shape_str(shape) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data);
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (shape != other.shape) return false;
    return std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

Tensor Tensor::full(std::vector<std::size_t> shape_, float value) {
    Tensor t(std::move(shape_));
    for (float& x : t.data) x = value;
    return t;
}

static void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw Error(errc::shape_mismatch, std::string(what) + " must be rank 2, got " + shape_str(t.shape));
    }
}

// ikj loop with f64 accumulators, stored back as f32. The j loop is
// independent per element so the compiler can vectorize it without
// reordering the k accumulation; each output row is produced by exactly one
// thread, so results do not depend on the thread count.
static void matmul_into(const float* a, const float* b, float* out,
                        std::size_t m, std::size_t k, std::size_t n) {
    const std::int64_t rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (std::int64_t i = 0; i < rows; ++i) {
        std::vector<double> acc(n, 0.0);
        const float* ai = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            const float* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += aik * bk[j];
        }
        float* oi = out + i * n;
        for (std::size_t j = 0; j < n; ++j) oi[j] = static_cast<float>(acc[j]);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul lhs");
    require_rank2(b, "matmul rhs");
    if (a.shape[1] != b.shape[0]) {
        throw Error(errc::shape_mismatch,
                    "matmul inner dimensions differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    }
    Tensor out({a.shape[0], b.shape[1]});
    matmul_into(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1], b.shape[1]);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt lhs");
    require_rank2(b, "matmul_nt rhs");
    if (a.shape[1] != b.shape[1]) {
        throw Error(errc::shape_mismatch,
                    "matmul_nt shared dimensions differ: " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
    }
    Tensor bt = transpose2d(b);
    Tensor out({a.shape[0], b.shape[0]});
    matmul_into(a.data.data(), bt.data.data(), out.data.data(), a.shape[0], a.shape[1], b.shape[0]);
    return out;
}

Tensor softmax_lastdim(const Tensor& t) {
    if (t.rank() < 1 || t.shape.back() < 1) {
        throw Error(errc::shape_mismatch, "softmax needs a last dimension >= 1, got " + shape_str(t.shape));
    }
    for (float x : t.data) {
        if (!std::isfinite(x)) throw Error(errc::non_finite, "softmax input contains a non-finite value");
    }
    const std::size_t d = t.shape.back();
    const std::size_t rows = t.size() / d;
    Tensor out(t.shape);
    const std::int64_t r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * d > 16384)
    for (std::int64_t i = 0; i < r; ++i) {
        const float* in = t.data.data() + i * d;
        float* o = out.data.data() + i * d;
        float mx = in[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
    }
    return out;
}

Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps) {
    if (t.rank() < 1) throw Error(errc::shape_mismatch, "layer_norm input must have rank >= 1");
    const std::size_t d = t.shape.back();
    if (gamma.size() != d || beta.size() != d) {
        throw Error(errc::shape_mismatch, "layer_norm gamma/beta length " + std::to_string(gamma.size()) + "/" +
                                              std::to_string(beta.size()) + " does not match last dim " +
                                              std::to_string(d));
    }
    const std::size_t rows = t.size() / d;
    Tensor out(t.shape);
    const std::int64_t r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * d > 16384)
    for (std::int64_t i = 0; i < r; ++i) {
        const float* in = t.data.data() + i * d;
        float* o = out.data.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = in[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const float m = static_cast<float>(mean);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        for (std::size_t j = 0; j < d; ++j) o[j] = (in[j] - m) * inv * gamma[j] + beta[j];
    }
    return out;
}

Tensor gelu(const Tensor& t) {
    Tensor out(t.shape);
    const std::int64_t n = static_cast<std::int64_t>(t.size());
    const float inv_sqrt2 = 0.70710678118654752440f;
#pragma omp parallel for schedule(static) if (t.size() > 16384)
    for (std::int64_t i = 0; i < n; ++i) {
        const float x = t.data[i];
        out.data[i] = 0.5f * x * (1.0f + std::erf(x * inv_sqrt2));
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw Error(errc::shape_mismatch, "add shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Tensor add_row(const Tensor& m, const Tensor& row) {
    require_rank2(m, "add_row matrix");
    if (row.size() != m.shape[1]) {
        throw Error(errc::shape_mismatch,
                    "add_row length " + std::to_string(row.size()) + " does not match " + shape_str(m.shape));
    }
    Tensor out(m.shape);
    for (std::size_t i = 0; i < m.shape[0]; ++i) {
        for (std::size_t j = 0; j < m.shape[1]; ++j) {
            out.data[i * m.shape[1] + j] = m.data[i * m.shape[1] + j] + row.data[j];
        }
    }
    return out;
}

Tensor scale(const Tensor& t, float factor) {
    Tensor out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = t.data[i] * factor;
    return out;
}

Tensor transpose2d(const Tensor& t) {
    require_rank2(t, "transpose2d input");
    Tensor out({t.shape[1], t.shape[0]});
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
        for (std::size_t j = 0; j < t.shape[1]; ++j) {
            out.data[j * t.shape[0] + i] = t.data[i * t.shape[1] + j];
        }
    }
    return out;
}

const char* errc_name(errc kind) {
    switch (kind) {
        case errc::shape_mismatch: return "shape mismatch";
        case errc::truncated: return "truncated buffer";
        case errc::bad_json: return "malformed JSON header";
        case errc::offset_mismatch: return "offset/shape mismatch";
        case errc::overlap: return "overlapping tensor spans";
        case errc::unsupported_dtype: return "unsupported dtype";
        case errc::validation: return "validation error";
        case errc::missing_tensor: return "missing tensor";
        case errc::degenerate_range: return "degenerate range";
        case errc::undefined_metric: return "undefined metric";
        case errc::non_finite: return "non-finite value";
        case errc::bad_argument: return "bad argument";
    }
    return "unknown error";
}

} // namespace vitseg
