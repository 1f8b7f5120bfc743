#ifndef DEFECTKIT_DEFECTKIT_HPP
#define DEFECTKIT_DEFECTKIT_HPP

#include "defectkit/core.hpp"
#include "defectkit/domain.hpp"
#include "defectkit/geometry.hpp"
#include "defectkit/archetype.hpp"
#include "defectkit/body.hpp"
#include "defectkit/defects.hpp"
#include "defectkit/mesh.hpp"
#include "defectkit/elasticity.hpp"
#include "defectkit/homogenize.hpp"

#endif  // DEFECTKIT_DEFECTKIT_HPP
