pub mod bivariate;
