#pragma once

#include "cluster.hpp"
#include "corpus.hpp"
#include "embedstore.hpp"
#include "featurize.hpp"
#include "merge.hpp"
#include "pipeline.hpp"
#include "projection.hpp"
#include "svg.hpp"
