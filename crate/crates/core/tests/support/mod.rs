pub mod random_workflow;
