#ifndef ACNET_MODELSPEC_HPP
#define ACNET_MODELSPEC_HPP

#include <string>
#include <vector>

namespace acnet {

enum class BlockKind { plain, acb, acb_shifted };

const char* block_kind_name(BlockKind k);

struct ConvDesc {
    int d = 0;
    int kh = 3, kw = 3;
    int stride = 1;
    int pad = 1;
    BlockKind block = BlockKind::plain;
    bool with_bias = false;  // set on fused-form convolutions
};

struct LayerDesc {
    enum class Kind { conv, relu, maxpool, gap, linear };
    Kind kind = Kind::relu;
    ConvDesc conv;
    int pool_k = 0, pool_stride = 0;
    int classes = 0;
};

/// Ordered textual description of a network; the carrier from which both
/// the trainable network and the fused plain network are built.
struct ModelSpec {
    int in_c = 0, in_h = 0, in_w = 0;
    std::vector<LayerDesc> layers;
};

/// Parses the line-oriented spec format:
///   input <c> <h> <w>
///   conv <d> <k>|<kh>x<kw> stride <s> pad <p> [plain|acb|acb-shifted] [bias]
///   relu
///   maxpool <k> <stride>
///   gap
///   linear <classes>
/// '#' starts a comment. Throws std::invalid_argument on malformed input.
ModelSpec parse_model_spec(const std::string& text);

std::string format_model_spec(const ModelSpec& spec);

/// Checks that layer shapes chain consistently and that acb blocks sit only
/// on 3x3 convolutions with padding 1. Throws naming the offending layer.
void validate_model_spec(const ModelSpec& spec);

/// Rewrites block flags: mode "off" turns every acb conv plain, "on" keeps
/// the spec as written, "shifted" turns every non-plain conv into the
/// border variant.
ModelSpec override_blocks(const ModelSpec& spec, const std::string& mode);

}  // namespace acnet

#endif
