#pragma once

#include "histonorm/adam.hpp"
#include "histonorm/autoencoder.hpp"
#include "histonorm/classifier.hpp"
#include "histonorm/colour.hpp"
#include "histonorm/cyclegan.hpp"
#include "histonorm/dataset.hpp"
#include "histonorm/error.hpp"
#include "histonorm/extractor.hpp"
#include "histonorm/gradcheck.hpp"
#include "histonorm/gradsuite.hpp"
#include "histonorm/image.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/kmeans.hpp"
#include "histonorm/layers.hpp"
#include "histonorm/mcae.hpp"
#include "histonorm/metrics.hpp"
#include "histonorm/mlp.hpp"
#include "histonorm/patches.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/ssim.hpp"
#include "histonorm/stanosa.hpp"
#include "histonorm/tensor.hpp"
#include "histonorm/texture.hpp"
#include "histonorm/zca.hpp"
