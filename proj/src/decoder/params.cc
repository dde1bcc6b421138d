#include "ncmap/decoder/params.h"

#include <cmath>

#include "ncmap/util/binary_io.h"
#include "ncmap/util/error.h"
#include "ncmap/util/random.h"

namespace ncmap {
namespace {

Linear MakeLinear(int in, int out, Rng& rng, const std::string& name) {
  const double bound = std::sqrt(6.0 / (in + out));
  diff::Matrix w(out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = Uniform(rng, -bound, bound);
  }
  return Linear{diff::Tensor::Leaf(std::move(w), true, name + ".weight"),
                diff::Tensor::Zeros(1, out, true, name + ".bias")};
}

Mlp MakeMlp(const std::vector<int>& widths, Rng& rng, const std::string& name) {
  Mlp mlp;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(MakeLinear(widths[i], widths[i + 1], rng,
                                    name + "." + std::to_string(i)));
  }
  return mlp;
}

LayerNormParams MakeNorm(int dim, const std::string& name) {
  return LayerNormParams{
      diff::Tensor::Leaf(diff::Matrix::Ones(1, dim), true, name + ".gain"),
      diff::Tensor::Zeros(1, dim, true, name + ".bias")};
}

Mlp CloneMlp(const Mlp& mlp) {
  Mlp out;
  for (const Linear& l : mlp.layers) {
    out.layers.push_back(Linear{l.weight.Clone(), l.bias.Clone()});
  }
  return out;
}

void AppendMlp(const Mlp& mlp, std::vector<diff::Tensor>& out) {
  for (const Linear& l : mlp.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
}

}  // namespace

void DecoderDims::Validate() const {
  if (raw_dim < 1 || dim < 2 || blocks < 1 || encoder_hidden < 1 ||
      block_hidden < 1 || head_hidden < 1) {
    throw InvalidArgument("invalid decoder dims (raw_dim=" +
                          std::to_string(raw_dim) + ", dim=" +
                          std::to_string(dim) + ", blocks=" +
                          std::to_string(blocks) + ")");
  }
}

DecoderParams::DecoderParams(const DecoderDims& dims, uint64_t seed)
    : dims_(dims) {
  dims_.Validate();
  Rng rng = MakeRng(seed, 0xDEC0DE);
  const int d = dims_.dim;
  encoder = MakeMlp({dims_.raw_dim, dims_.encoder_hidden, d}, rng, "encoder");
  for (int t = 0; t < dims_.blocks; ++t) {
    const std::string name = "block" + std::to_string(t);
    BlockParams b;
    b.wq = MakeLinear(d, d, rng, name + ".wq").weight;
    b.wk = MakeLinear(d, d, rng, name + ".wk").weight;
    b.wv = MakeLinear(d, d, rng, name + ".wv").weight;
    b.mlp = MakeMlp({d, dims_.block_hidden, d}, rng, name + ".mlp");
    b.norm_attention = MakeNorm(d, name + ".norm_attention");
    b.norm_mlp = MakeNorm(d, name + ".norm_mlp");
    blocks.push_back(std::move(b));
  }
  head = MakeMlp({d, dims_.head_hidden, 4}, rng, "head");
}

DecoderParams::DecoderParams(const DecoderParams& other)
    : encoder(CloneMlp(other.encoder)),
      head(CloneMlp(other.head)),
      dims_(other.dims_) {
  for (const BlockParams& b : other.blocks) {
    BlockParams c;
    c.wq = b.wq.Clone();
    c.wk = b.wk.Clone();
    c.wv = b.wv.Clone();
    c.mlp = CloneMlp(b.mlp);
    c.norm_attention = {b.norm_attention.gain.Clone(),
                        b.norm_attention.bias.Clone()};
    c.norm_mlp = {b.norm_mlp.gain.Clone(), b.norm_mlp.bias.Clone()};
    blocks.push_back(std::move(c));
  }
}

DecoderParams& DecoderParams::operator=(const DecoderParams& other) {
  if (this != &other) {
    DecoderParams copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::vector<diff::Tensor> DecoderParams::Tensors() const {
  std::vector<diff::Tensor> out;
  AppendMlp(encoder, out);
  for (const BlockParams& b : blocks) {
    out.push_back(b.wq);
    out.push_back(b.wk);
    out.push_back(b.wv);
    AppendMlp(b.mlp, out);
    out.push_back(b.norm_attention.gain);
    out.push_back(b.norm_attention.bias);
    out.push_back(b.norm_mlp.gain);
    out.push_back(b.norm_mlp.bias);
  }
  AppendMlp(head, out);
  return out;
}

void DecoderParams::SetRequiresGrad(bool flag) {
  for (diff::Tensor& t : Tensors()) t.set_requires_grad(flag);
}

size_t DecoderParams::NumScalars() const {
  size_t n = 0;
  for (const diff::Tensor& t : Tensors()) n += static_cast<size_t>(t.size());
  return n;
}

std::string SerializeParams(const DecoderParams& params) {
  BinaryWriter w;
  w.PutMagic("NMWT");
  w.PutU32(kWeightsFormatVersion);
  const DecoderDims& d = params.dims();
  for (int v : {d.raw_dim, d.dim, d.blocks, d.encoder_hidden, d.block_hidden,
                d.head_hidden}) {
    w.PutU32(static_cast<uint32_t>(v));
  }
  const auto tensors = params.Tensors();
  w.PutU32(static_cast<uint32_t>(tensors.size()));
  for (const diff::Tensor& t : tensors) {
    w.PutU32(static_cast<uint32_t>(t.rows()));
    w.PutU32(static_cast<uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.PutF64(t.value().data()[i]);
  }
  return w.Release();
}

DecoderParams DeserializeParams(std::string_view bytes) {
  BinaryReader r(bytes, "weights");
  r.ExpectMagic("NMWT");
  const uint32_t version = r.GetU32();
  if (version != kWeightsFormatVersion) {
    r.Fail("unsupported weights format version " + std::to_string(version));
  }
  DecoderDims dims;
  dims.raw_dim = static_cast<int>(r.GetU32());
  dims.dim = static_cast<int>(r.GetU32());
  dims.blocks = static_cast<int>(r.GetU32());
  dims.encoder_hidden = static_cast<int>(r.GetU32());
  dims.block_hidden = static_cast<int>(r.GetU32());
  dims.head_hidden = static_cast<int>(r.GetU32());
  try {
    dims.Validate();
  } catch (const InvalidArgument& e) {
    r.Fail(e.what());
  }
  if (dims.blocks > 4096 || dims.dim > 65536 || dims.raw_dim > 65536) {
    r.Fail("implausible decoder dims");
  }
  DecoderParams params(dims, 0);
  auto tensors = params.Tensors();
  const uint32_t count = r.GetU32();
  if (count != tensors.size()) {
    r.Fail("tensor count " + std::to_string(count) + " does not match dims");
  }
  for (diff::Tensor& t : tensors) {
    const uint32_t rows = r.GetU32();
    const uint32_t cols = r.GetU32();
    if (rows != t.rows() || cols != t.cols()) {
      r.Fail("tensor shape mismatch for " + t.name());
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double v = r.GetF64();
      if (!std::isfinite(v)) r.Fail("non-finite weight in " + t.name());
      t.mutable_value().data()[i] = v;
    }
  }
  r.ExpectEnd();
  return params;
}

void SaveParams(const DecoderParams& params, const std::string& path) {
  WriteFileBytes(path, SerializeParams(params));
}

DecoderParams LoadParams(const std::string& path) {
  return DeserializeParams(ReadFileBytes(path));
}

}  // namespace ncmap
