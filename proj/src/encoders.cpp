#include "selfcf/encoders.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "selfcf/errors.hpp"
#include "selfcf/rng.hpp"

namespace selfcf {
namespace {

constexpr std::array<char, 8> kMagic{'S', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void check_batch(const EncoderParams& params, const Batch& batch) {
  if (batch.users.size() != batch.items.size()) {
    throw InvalidDimension("batch user/item lists differ in length");
  }
  for (std::size_t u : batch.users) {
    if (u >= params.num_users()) throw InvalidIndex("user index " + std::to_string(u) + " out of range");
  }
  for (std::size_t i : batch.items) {
    if (i >= params.num_items()) throw InvalidIndex("item index " + std::to_string(i) + " out of range");
  }
}

void fill_context(ForwardContext& ctx, Backbone backbone, const EncoderParams& params,
                  const SparseMatrix* adjacency, const Batch& batch) {
  ctx.backbone = backbone;
  ctx.layers = backbone == Backbone::mf ? 0 : params.layers;
  ctx.adjacency = adjacency;
  ctx.num_users = params.num_users();
  ctx.num_items = params.num_items();
  ctx.batch_users = batch.users;
  ctx.batch_items = batch.items;
  ctx.ready = true;
}

}  // namespace

Backbone parse_backbone(std::string_view name) {
  if (name == "mf" || name == "bpr") return Backbone::mf;
  if (name == "lightgcn") return Backbone::lightgcn;
  throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

std::string_view to_string(Backbone backbone) {
  return backbone == Backbone::mf ? "mf" : "lightgcn";
}

EncoderParams EncoderParams::xavier(std::size_t num_users, std::size_t num_items,
                                    std::size_t dim, std::size_t layers, std::uint64_t seed) {
  return EncoderParams{xavier_init(num_users, dim, derive_seed(seed, {1})),
                       xavier_init(num_items, dim, derive_seed(seed, {2})), layers};
}

EncoderOutput mf_forward(const EncoderParams& params, const Batch& batch, ForwardContext& ctx) {
  check_batch(params, batch);
  EncoderOutput out{params.users, params.items, gather_rows(params.users, batch.users),
                    gather_rows(params.items, batch.items)};
  fill_context(ctx, Backbone::mf, params, nullptr, batch);
  return out;
}

DenseMatrix layer_mean_propagate(const SparseMatrix& adjacency, const DenseMatrix& x,
                                 std::size_t layers) {
  DenseMatrix acc = x;
  DenseMatrix current = x;
  for (std::size_t k = 0; k < layers; ++k) {
    current = spmm(adjacency, current);
    axpy(acc, current);
  }
  scale_inplace(acc, 1.0 / static_cast<double>(layers + 1));
  return acc;
}

EncoderOutput lightgcn_forward(const EncoderParams& params, const SparseMatrix& adjacency,
                               const Batch& batch, ForwardContext& ctx) {
  const std::size_t n = params.num_users() + params.num_items();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw InvalidDimension("adjacency is " + std::to_string(adjacency.rows()) + "x" +
                           std::to_string(adjacency.cols()) + ", expected " +
                           std::to_string(n) + " nodes");
  }
  if (params.users.cols() != params.items.cols()) {
    throw InvalidDimension("user and item tables differ in width");
  }
  check_batch(params, batch);
  const DenseMatrix final_table =
      layer_mean_propagate(adjacency, vstack(params.users, params.items), params.layers);
  EncoderOutput out;
  out.users = slice_rows(final_table, 0, params.num_users());
  out.items = slice_rows(final_table, params.num_users(), n);
  out.batch_users = gather_rows(out.users, batch.users);
  out.batch_items = gather_rows(out.items, batch.items);
  fill_context(ctx, Backbone::lightgcn, params, &adjacency, batch);
  return out;
}

EncoderOutput encoder_forward(Backbone backbone, const EncoderParams& params,
                              const SparseMatrix* adjacency, const Batch& batch,
                              ForwardContext& ctx) {
  if (backbone == Backbone::mf) return mf_forward(params, batch, ctx);
  if (adjacency == nullptr) throw InvalidParameter("lightgcn forward needs an adjacency");
  return lightgcn_forward(params, *adjacency, batch, ctx);
}

EncoderGrad encoder_backward(const ForwardContext& ctx, const DenseMatrix& grad_batch_users,
                             const DenseMatrix& grad_batch_items) {
  if (!ctx.ready) throw StateError("encoder_backward called without a forward pass");
  if (grad_batch_users.rows() != ctx.batch_users.size() ||
      grad_batch_items.rows() != ctx.batch_items.size()) {
    throw InvalidDimension("upstream gradient does not match the forward batch");
  }
  DenseMatrix users(ctx.num_users, grad_batch_users.cols());
  DenseMatrix items(ctx.num_items, grad_batch_items.cols());
  scatter_add_rows(users, ctx.batch_users, grad_batch_users);
  scatter_add_rows(items, ctx.batch_items, grad_batch_items);
  return encoder_backward_full(ctx, std::move(users), std::move(items));
}

EncoderGrad encoder_backward_full(const ForwardContext& ctx, DenseMatrix grad_users,
                                  DenseMatrix grad_items) {
  if (!ctx.ready) throw StateError("encoder_backward called without a forward pass");
  if (grad_users.rows() != ctx.num_users || grad_items.rows() != ctx.num_items) {
    throw InvalidDimension("full-table gradient has the wrong row count");
  }
  // Lookup adjoint; an L = 0 LightGCN readout is the same identity map.
  if (ctx.backbone == Backbone::mf || ctx.layers == 0) {
    return {std::move(grad_users), std::move(grad_items)};
  }
  const DenseMatrix g =
      layer_mean_propagate(*ctx.adjacency, vstack(grad_users, grad_items), ctx.layers);
  return {slice_rows(g, 0, ctx.num_users), slice_rows(g, ctx.num_users, g.rows())};
}

namespace binary {

void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b.data(), b.size());
}

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b.data(), b.size());
}

void write_f64s(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw IoError("truncated checkpoint");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw IoError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

void read_f64s(std::istream& in, std::span<double> values) {
  for (double& v : values) v = std::bit_cast<double>(read_u64(in));
}

}  // namespace binary

void write_encoder_block(std::ostream& out, const EncoderParams& params) {
  out.write(kMagic.data(), kMagic.size());
  binary::write_u32(out, kVersion);
  binary::write_u64(out, params.num_users());
  binary::write_u64(out, params.num_items());
  binary::write_u64(out, params.dim());
  binary::write_u64(out, params.layers);
  binary::write_f64s(out, params.users.values());
  binary::write_f64s(out, params.items.values());
  if (!out) throw IoError("checkpoint write failed");
}

EncoderParams read_encoder_block(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = binary::read_u32(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t num_users = binary::read_u64(in);
  const std::uint64_t num_items = binary::read_u64(in);
  const std::uint64_t dim = binary::read_u64(in);
  EncoderParams params;
  params.layers = binary::read_u64(in);
  params.users = DenseMatrix(num_users, dim);
  params.items = DenseMatrix(num_items, dim);
  binary::read_f64s(in, params.users.values());
  binary::read_f64s(in, params.items.values());
  return params;
}

}  // namespace selfcf
