#pragma once

#include "genfusion/tensor.hpp"

namespace genfusion {

/// Fixed average-pool encoder / nearest-neighbour decoder pair. Channels are
/// preserved; spatial dims shrink by `factor`.
struct LatentCodec {
    int factor = 2;

    Shape latent_shape(Shape image) const;
    ImageTensor encode(const ImageTensor& x) const;
    ImageTensor decode(const ImageTensor& z) const;
    ImageTensor roundtrip(const ImageTensor& x) const { return decode(encode(x)); }
};

}  // namespace genfusion
