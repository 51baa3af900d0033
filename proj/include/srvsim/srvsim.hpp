#ifndef SRVSIM_SRVSIM_HPP
#define SRVSIM_SRVSIM_HPP

#include "srvsim/common.hpp"
#include "srvsim/isa.hpp"
#include "srvsim/dsl.hpp"
#include "srvsim/vectorize.hpp"
#include "srvsim/lsu.hpp"
#include "srvsim/memhier.hpp"
#include "srvsim/trace.hpp"
#include "srvsim/predictors.hpp"
#include "srvsim/mld.hpp"
#include "srvsim/pipeline.hpp"
#include "srvsim/attacks.hpp"
#include "srvsim/config.hpp"
#include "srvsim/io.hpp"

#endif
